#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gnnsl/errors.hpp"

namespace gnnsl::corpus {

enum class LabelScheme { BIO, BMES, PLAIN };

LabelScheme scheme_from_string(const std::string& s);
std::string scheme_to_string(LabelScheme s);

/// Ordered label inventory plus the span-encoding scheme the names follow.
struct LabelSet {
    std::vector<std::string> names;
    LabelScheme scheme = LabelScheme::BIO;

    std::size_t size() const { return names.size(); }
    /// -1 if absent.
    int find(const std::string& name) const;
    /// Throws ArgumentError if absent.
    int id(const std::string& name) const;
    const std::string& name(int id) const;
    void validate() const;
};

struct TokenSequence {
    std::vector<std::string> tokens;
    std::vector<int> labels;
    std::uint32_t id = 0;

    std::size_t size() const { return tokens.size(); }
};

struct Dataset {
    std::vector<TokenSequence> sentences;

    std::size_t token_count() const;
};

struct ParseResult {
    Dataset data;
    LabelSet labels;
    std::size_t repaired = 0;  // orphan I-X lines rewritten to B-X
};

/// Two-column CoNLL text: "surface<ws>label", blank line between sentences.
/// Accepts LF and CRLF. BIO violations are repaired (I-X -> B-X) and counted.
ParseResult parse_conll(std::string_view text, LabelScheme scheme);

/// Inverse of parse_conll on well-formed data, byte for byte.
std::string serialize(const Dataset& data, const LabelSet& labels);

struct Span {
    std::size_t start = 0;
    std::size_t end = 0;  // exclusive
    std::string type;

    bool operator==(const Span&) const = default;
};

std::vector<Span> spans_from_labels(const std::vector<int>& labels, const LabelSet& set);

/// Rebuilds a label sequence of length n from disjoint spans (O elsewhere).
std::vector<int> labels_from_spans(const std::vector<Span>& spans, std::size_t n,
                                   const LabelSet& set);

struct SyntheticCorpus {
    Dataset train;
    Dataset dev;
    Dataset test;
    LabelSet labels;
};

/// Deterministic template corpus with a controllable share of entity surface
/// forms that occur exactly once in train but recur in test.
SyntheticCorpus generate_synthetic(std::uint64_t seed, std::size_t n_sentences,
                                   double long_tail_fraction);

/// Token string <-> id. Id 0 is the sentence-boundary marker, id 1 is UNK.
class Vocab {
public:
    static constexpr int kBoundary = 0;
    static constexpr int kUnk = 1;

    static Vocab build(const Dataset& data);
    /// Rebuilds from a full id-ordered token list (reserved entries first).
    static Vocab from_tokens(std::vector<std::string> tokens);
    const std::vector<std::string>& tokens() const { return id_to_token_; }

    std::size_t size() const { return id_to_token_.size(); }
    int id_or_unk(const std::string& token) const;
    const std::string& token(int id) const;

private:
    std::unordered_map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
};

}  // namespace gnnsl::corpus
