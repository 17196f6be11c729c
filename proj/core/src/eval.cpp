#include "gnnsl/eval.hpp"

#include <algorithm>
#include <sstream>

namespace gnnsl::eval {

namespace {

double pct(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : 100.0 * double(num) / double(den);
}

double f1_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

std::string span_surface(const corpus::TokenSequence& sent, const corpus::Span& sp) {
    std::string s;
    for (std::size_t i = sp.start; i < sp.end; ++i) {
        if (i > sp.start) s += ' ';
        s += sent.tokens[i];
    }
    return s;
}

}  // namespace

double LabelScore::precision() const { return pct(correct, predicted); }
double LabelScore::recall() const { return pct(correct, gold); }
double LabelScore::f1() const { return f1_of(precision(), recall()); }

EvalReport evaluate(const std::vector<std::vector<int>>& pred,
                    const std::vector<std::vector<int>>& gold,
                    const corpus::LabelSet& set, const corpus::Dataset* gold_sentences,
                    const corpus::Dataset* train) {
    if (pred.size() != gold.size()) {
        throw ArgumentError("evaluate: " + std::to_string(pred.size()) +
                            " predicted vs " + std::to_string(gold.size()) +
                            " gold sentences");
    }

    // Long-tail surfaces: gold-span surface forms seen <= 1 time in training.
    std::map<std::string, std::size_t> train_counts;
    bool long_tail = train != nullptr && gold_sentences != nullptr;
    if (long_tail) {
        for (const auto& sent : train->sentences) {
            for (const auto& sp : corpus::spans_from_labels(sent.labels, set)) {
                ++train_counts[span_surface(sent, sp)];
            }
        }
    }
    auto is_long_tail = [&](const std::string& surface) {
        auto it = train_counts.find(surface);
        return it == train_counts.end() || it->second <= 1;
    };

    EvalReport rep;
    std::size_t n_gold = 0, n_pred = 0, n_correct = 0;
    std::size_t tok_correct = 0, tok_total = 0;
    std::size_t lt_gold = 0, lt_pred = 0, lt_correct = 0;

    for (std::size_t s = 0; s < gold.size(); ++s) {
        if (pred[s].size() != gold[s].size()) {
            throw ArgumentError("evaluate: length mismatch in sentence " +
                                std::to_string(s));
        }
        for (std::size_t i = 0; i < gold[s].size(); ++i) {
            if (pred[s][i] == gold[s][i]) ++tok_correct;
            ++tok_total;
        }
        auto gold_spans = corpus::spans_from_labels(gold[s], set);
        auto pred_spans = corpus::spans_from_labels(pred[s], set);
        n_gold += gold_spans.size();
        n_pred += pred_spans.size();
        for (const auto& sp : gold_spans) ++rep.per_type[sp.type].gold;
        for (const auto& sp : pred_spans) ++rep.per_type[sp.type].predicted;
        for (const auto& sp : pred_spans) {
            if (std::find(gold_spans.begin(), gold_spans.end(), sp) != gold_spans.end()) {
                ++n_correct;
                ++rep.per_type[sp.type].correct;
            }
        }
        if (long_tail) {
            const auto& sent = gold_sentences->sentences[s];
            for (const auto& sp : gold_spans) {
                if (is_long_tail(span_surface(sent, sp))) ++lt_gold;
            }
            for (const auto& sp : pred_spans) {
                if (!is_long_tail(span_surface(sent, sp))) continue;
                ++lt_pred;
                if (std::find(gold_spans.begin(), gold_spans.end(), sp) !=
                    gold_spans.end()) {
                    ++lt_correct;
                }
            }
        }
    }

    rep.precision = pct(n_correct, n_pred);
    rep.recall = pct(n_correct, n_gold);
    rep.f1 = f1_of(rep.precision, rep.recall);
    rep.token_accuracy = pct(tok_correct, tok_total);
    if (long_tail) {
        rep.long_tail_gold = lt_gold;
        rep.long_tail_f1 = f1_of(pct(lt_correct, lt_pred), pct(lt_correct, lt_gold));
    }
    return rep;
}

EvalReport evaluate(const std::vector<std::vector<int>>& pred, const corpus::Dataset& gold,
                    const corpus::LabelSet& set, const corpus::Dataset* train) {
    std::vector<std::vector<int>> gold_labels;
    gold_labels.reserve(gold.sentences.size());
    for (const auto& s : gold.sentences) gold_labels.push_back(s.labels);
    return evaluate(pred, gold_labels, set, &gold, train);
}

std::string EvalReport::to_text() const {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(2);
    out << "precision=" << precision << "\n";
    out << "recall=" << recall << "\n";
    out << "f1=" << f1 << "\n";
    out << "token_accuracy=" << token_accuracy << "\n";
    out << "long_tail_f1=" << long_tail_f1 << "\n";
    out << "long_tail_gold=" << long_tail_gold << "\n";
    for (const auto& [type, sc] : per_type) {
        out << "type." << type << ".precision=" << sc.precision() << "\n";
        out << "type." << type << ".recall=" << sc.recall() << "\n";
        out << "type." << type << ".f1=" << sc.f1() << "\n";
    }
    return out.str();
}

}  // namespace gnnsl::eval
