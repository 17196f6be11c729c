#include "gnnsl/io.hpp"

#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

namespace gnnsl::io {

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& data) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot open " + path + " for writing");
    f.write(data.data(), std::streamsize(data.size()));
    if (!f) throw FormatError("short write to " + path);
}

void write_file_atomic(const std::string& path, const std::string& data) {
    namespace fs = std::filesystem;
    fs::path target(path);
    static std::atomic<unsigned> counter{0};
    std::string tmp_name = target.filename().string() + ".tmp." +
                           std::to_string(::getpid()) + "." +
                           std::to_string(counter.fetch_add(1));
    fs::path tmp = target.parent_path() / tmp_name;
    write_file(tmp.string(), data);
    fs::rename(tmp, target);
}

}  // namespace gnnsl::io
