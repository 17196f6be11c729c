#pragma once

#include <map>
#include <string>
#include <vector>

#include "gnnsl/corpus.hpp"

namespace gnnsl::eval {

struct LabelScore {
    std::size_t gold = 0;
    std::size_t predicted = 0;
    std::size_t correct = 0;

    double precision() const;
    double recall() const;
    double f1() const;
};

/// Span-level exact-match scores, conlleval semantics; percentages in [0,100].
struct EvalReport {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double token_accuracy = 0.0;
    std::map<std::string, LabelScore> per_type;
    /// F1 restricted to spans whose surface form occurs at most once as a
    /// gold span in the training split. Only set when a training split is
    /// supplied.
    double long_tail_f1 = 0.0;
    std::size_t long_tail_gold = 0;
    std::size_t repaired = 0;  // carried through from parsing, informational

    std::string to_text() const;  // flat key=value block
};

EvalReport evaluate(const std::vector<std::vector<int>>& pred,
                    const std::vector<std::vector<int>>& gold,
                    const corpus::LabelSet& set,
                    const corpus::Dataset* gold_sentences = nullptr,
                    const corpus::Dataset* train = nullptr);

/// Convenience overload: predictions aligned against a gold dataset.
EvalReport evaluate(const std::vector<std::vector<int>>& pred, const corpus::Dataset& gold,
                    const corpus::LabelSet& set, const corpus::Dataset* train = nullptr);

}  // namespace gnnsl::eval
