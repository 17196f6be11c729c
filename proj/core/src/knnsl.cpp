#include "gnnsl/knnsl.hpp"

#include <algorithm>
#include <cmath>

namespace gnnsl::knn {

void InterpConfig::validate() const {
    if (k < 1) throw ArgumentError("interp: k must be >= 1");
    if (!(temperature > 0.0)) throw ArgumentError("interp: temperature must be positive");
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw ArgumentError("interp: lambda must be in [0, 1]");
    }
}

std::vector<double> knn_distribution_raw(
    const std::vector<std::pair<int, double>>& labeled_distances, double temperature,
    std::size_t label_count) {
    if (labeled_distances.empty()) {
        throw ArgumentError("knn_distribution: empty neighbor set");
    }
    if (!(temperature > 0.0)) {
        throw ArgumentError("knn_distribution: temperature must be positive");
    }
    std::vector<double> p(label_count, 0.0);
    // Shift by the smallest distance before exponentiating; the shift cancels
    // in the normalization.
    double dmin = labeled_distances.front().second;
    for (const auto& [label, dist] : labeled_distances) dmin = std::min(dmin, dist);
    double z = 0.0;
    for (const auto& [label, dist] : labeled_distances) {
        double w = std::exp(-(dist - dmin) / temperature);
        p[std::size_t(label)] += w;
        z += w;
    }
    for (auto& v : p) v /= z;
    return p;
}

std::vector<double> knn_distribution(const ds::Datastore& store,
                                     const ds::NeighborSet& neighbors, double temperature,
                                     std::size_t label_count) {
    std::vector<std::pair<int, double>> pairs;
    pairs.reserve(neighbors.size());
    for (const auto& nb : neighbors) {
        pairs.emplace_back(int(store.record(nb.record_index).label_id),
                           std::sqrt(nb.dist2));
    }
    return knn_distribution_raw(pairs, temperature, label_count);
}

std::vector<double> interpolate(const std::vector<double>& p_vanilla,
                                const std::vector<double>& p_knn, double lambda) {
    if (p_vanilla.size() != p_knn.size()) {
        throw DimensionError("interpolate: distributions have lengths " +
                             std::to_string(p_vanilla.size()) + " and " +
                             std::to_string(p_knn.size()));
    }
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw ArgumentError("interpolate: lambda must be in [0, 1]");
    }
    std::vector<double> out(p_vanilla.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = lambda * p_vanilla[i] + (1.0 - lambda) * p_knn[i];
    }
    return out;
}

int argmax_label(const std::vector<double>& distribution) {
    if (distribution.empty()) throw ArgumentError("argmax_label: empty distribution");
    // Ties break toward the lowest label id.
    std::size_t best = 0;
    for (std::size_t i = 1; i < distribution.size(); ++i) {
        if (distribution[i] > distribution[best]) best = i;
    }
    return int(best);
}

std::vector<TaggedToken> tag_knn(const enc::EncoderParameters& params,
                                 const corpus::Vocab& vocab, const ds::Datastore& store,
                                 const corpus::TokenSequence& sentence,
                                 const InterpConfig& cfg) {
    cfg.validate();
    if (enc::checkpoint_digest(params) != store.source_digest()) {
        throw ConsistencyError(
            "tag_knn: datastore was built from a different encoder checkpoint");
    }
    num::NoGrad ng;
    auto hs = enc::encode(params, vocab, sentence);
    std::vector<TaggedToken> out;
    out.reserve(sentence.size());
    for (std::size_t i = 0; i < sentence.size(); ++i) {
        std::vector<double> p_vanilla = enc::vanilla_predict(params, hs[i]).value();
        auto neighbors = ds::knn_query(store, hs[i].value(), cfg.k);
        auto p_knn = knn_distribution(store, neighbors, cfg.temperature, p_vanilla.size());
        TaggedToken t;
        t.distribution = interpolate(p_vanilla, p_knn, cfg.lambda);
        t.label_id = argmax_label(t.distribution);
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace gnnsl::knn
