#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "gnnsl/corpus.hpp"
#include "gnnsl/encoder.hpp"
#include "gnnsl/sha256.hpp"

namespace gnnsl::ds {

/// One cached training token: key vector (f32 storage), label, provenance.
struct Record {
    std::vector<float> key;
    std::uint32_t label_id = 0;
    std::uint32_t sentence_id = 0;
    std::uint32_t token_index = 0;
};

struct TokenRef {
    std::uint32_t sentence_id = 0;
    std::uint32_t token_index = 0;

    bool operator==(const TokenRef&) const = default;
};

struct Neighbor {
    std::size_t record_index = 0;
    double dist2 = 0.0;  // squared L2
};

/// Ascending by distance, ties broken by (sentence_id, token_index).
using NeighborSet = std::vector<Neighbor>;

class Datastore {
public:
    Datastore() = default;
    Datastore(std::size_t d, std::vector<std::string> label_names, Digest source_digest);

    std::size_t d() const { return d_; }
    std::size_t size() const { return records_.size(); }
    const Record& record(std::size_t i) const { return records_[i]; }
    const std::vector<Record>& records() const { return records_; }
    const std::vector<std::string>& label_names() const { return label_names_; }
    const Digest& source_digest() const { return source_digest_; }

    void add(Record r);
    /// Record index for (sentence, token), or nullopt.
    std::optional<std::size_t> find(TokenRef ref) const;
    /// Token count of a stored sentence (0 if unknown).
    std::size_t sentence_length(std::uint32_t sentence_id) const;

    bool operator==(const Datastore& other) const;

private:
    std::size_t d_ = 0;
    std::vector<Record> records_;
    std::vector<std::string> label_names_;
    Digest source_digest_{};
    std::unordered_map<std::uint64_t, std::size_t> by_token_;
    std::unordered_map<std::uint32_t, std::size_t> sentence_len_;
};

/// One record per training token, corpus order; keys are the encoder's
/// per-token representations downcast to f32.
Datastore build(const enc::EncoderParameters& params, const corpus::Vocab& vocab,
                const corpus::Dataset& train, const corpus::LabelSet& labels);

/// Exact k-smallest squared-L2 search with deterministic tie-breaks.
NeighborSet knn_query(const Datastore& store, const std::vector<double>& h, std::size_t k,
                      std::optional<TokenRef> exclude = std::nullopt);

void save(const Datastore& store, const std::string& path);
Datastore load(const std::string& path);

}  // namespace gnnsl::ds
