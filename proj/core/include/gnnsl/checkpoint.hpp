#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gnnsl/numcore.hpp"
#include "gnnsl/sha256.hpp"

namespace gnnsl::ckpt {

/// Named-tensor container shared by the encoder ("GSLE") and GNN ("GSLG")
/// checkpoints: magic, version u32, config block (string key/value pairs),
/// then per tensor: name (u16 len + bytes), rank u32, dims u32 each, f64
/// little-endian values.
struct Container {
    std::string magic;  // 4 bytes
    std::map<std::string, std::string> config;
    std::vector<std::pair<std::string, num::Tensor>> tensors;
};

constexpr std::uint32_t kVersion = 1;

std::string serialize(const Container& c);
Container deserialize(const std::string& bytes, const std::string& expected_magic);

void save(const std::string& path, const Container& c);
Container load(const std::string& path, const std::string& expected_magic);

/// Fingerprint of the serialized container.
Digest digest(const Container& c);

}  // namespace gnnsl::ckpt
