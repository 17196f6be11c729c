#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace gnnsl {

using Digest = std::array<std::uint8_t, 32>;

/// Incremental SHA-256 (FIPS 180-4), used to fingerprint checkpoints and
/// configs so downstream artifacts can verify what they were built from.
class Sha256 {
public:
    Sha256();
    void update(const void* data, std::size_t len);
    Digest finish();

    static Digest of(const void* data, std::size_t len);
    static Digest of(const std::string& s) { return of(s.data(), s.size()); }

private:
    void process_block(const std::uint8_t* block);

    std::uint32_t state_[8];
    std::uint64_t total_len_ = 0;
    std::uint8_t buf_[64];
    std::size_t buf_len_ = 0;
};

std::string digest_hex(const Digest& d);

}  // namespace gnnsl
