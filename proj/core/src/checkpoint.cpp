#include "gnnsl/checkpoint.hpp"

#include "gnnsl/io.hpp"

namespace gnnsl::ckpt {

std::string serialize(const Container& c) {
    if (c.magic.size() != 4) throw FormatError("checkpoint magic must be 4 bytes");
    std::string out = c.magic;
    io::put_u32(out, kVersion);
    io::put_u32(out, std::uint32_t(c.config.size()));
    for (const auto& [k, v] : c.config) {
        io::put_u16(out, std::uint16_t(k.size()));
        out += k;
        io::put_u16(out, std::uint16_t(v.size()));
        out += v;
    }
    io::put_u32(out, std::uint32_t(c.tensors.size()));
    for (const auto& [name, t] : c.tensors) {
        io::put_u16(out, std::uint16_t(name.size()));
        out += name;
        io::put_u32(out, std::uint32_t(t.rank()));
        for (std::size_t d : t.shape()) io::put_u32(out, std::uint32_t(d));
        for (double v : t.value()) io::put_f64(out, v);
    }
    return out;
}

Container deserialize(const std::string& bytes, const std::string& expected_magic) {
    io::Reader r(bytes, "checkpoint");
    Container c;
    c.magic = r.bytes(4);
    if (c.magic != expected_magic) {
        throw FormatError("checkpoint: bad magic '" + c.magic + "', expected '" +
                          expected_magic + "'");
    }
    std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    }
    std::uint32_t n_cfg = r.u32();
    for (std::uint32_t i = 0; i < n_cfg; ++i) {
        std::string k = r.bytes(r.u16());
        std::string v = r.bytes(r.u16());
        c.config.emplace(std::move(k), std::move(v));
    }
    std::uint32_t n_tensors = r.u32();
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        std::string name = r.bytes(r.u16());
        std::uint32_t rank = r.u32();
        std::vector<std::size_t> shape(rank);
        std::size_t numel = 1;
        for (auto& d : shape) {
            d = r.u32();
            numel *= d;
        }
        std::vector<double> vals(numel);
        for (auto& v : vals) v = r.f64();
        c.tensors.emplace_back(std::move(name),
                               num::Tensor(std::move(shape), std::move(vals)));
    }
    if (!r.at_end()) {
        throw FormatError("checkpoint: trailing bytes at offset " +
                          std::to_string(r.offset()));
    }
    return c;
}

void save(const std::string& path, const Container& c) {
    io::write_file_atomic(path, serialize(c));
}

Container load(const std::string& path, const std::string& expected_magic) {
    return deserialize(io::read_file(path), expected_magic);
}

Digest digest(const Container& c) {
    std::string bytes = serialize(c);
    return Sha256::of(bytes.data(), bytes.size());
}

}  // namespace gnnsl::ckpt
