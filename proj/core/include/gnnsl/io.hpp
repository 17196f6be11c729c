#pragma once

#include <cstdint>
#include <string>

#include "gnnsl/errors.hpp"

namespace gnnsl::io {

/// Little-endian append helpers over a byte buffer.
inline void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(char(v & 0xff));
    out.push_back(char(v >> 8));
}

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    __builtin_memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

inline void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    __builtin_memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

/// Bounds-checked little-endian reader; errors name the byte offset.
class Reader {
public:
    Reader(const std::string& data, const std::string& what)
        : data_(data), what_(what) {}

    std::size_t offset() const { return pos_; }
    bool at_end() const { return pos_ == data_.size(); }

    void need(std::size_t n) {
        if (pos_ + n > data_.size()) {
            throw FormatError(what_ + ": truncated at offset " + std::to_string(pos_));
        }
    }

    std::uint8_t u8() {
        need(1);
        return std::uint8_t(data_[pos_++]);
    }

    std::uint16_t u16() {
        need(2);
        std::uint16_t v = std::uint16_t(std::uint8_t(data_[pos_])) |
                          std::uint16_t(std::uint8_t(data_[pos_ + 1])) << 8;
        pos_ += 2;
        return v;
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(data_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }

    float f32() {
        std::uint32_t bits = u32();
        float v;
        __builtin_memcpy(&v, &bits, 4);
        return v;
    }

    double f64() {
        std::uint64_t bits = u64();
        double v;
        __builtin_memcpy(&v, &bits, 8);
        return v;
    }

    std::string bytes(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

private:
    const std::string& data_;
    std::string what_;
    std::size_t pos_ = 0;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& data);
/// Write via a temp file in the same directory plus rename, so concurrent
/// writers of the same path never expose partial content.
void write_file_atomic(const std::string& path, const std::string& data);

}  // namespace gnnsl::io
