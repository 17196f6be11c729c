#pragma once

#include <cstddef>
#include <vector>

#include "gnnsl/datastore.hpp"
#include "gnnsl/encoder.hpp"

namespace gnnsl::knn {

struct InterpConfig {
    std::size_t k = 32;
    double temperature = 1.0;
    double lambda = 0.5;  // weight of the vanilla distribution

    void validate() const;
};

/// Temperature softmax over neighbor labels: p(y) proportional to
/// sum over neighbors with label y of exp(-d/T), d the unsquared L2
/// distance; normalized over the label set.
std::vector<double> knn_distribution(const ds::Datastore& store,
                                     const ds::NeighborSet& neighbors, double temperature,
                                     std::size_t label_count);

/// Same kernel over bare (label, unsquared distance) pairs.
std::vector<double> knn_distribution_raw(
    const std::vector<std::pair<int, double>>& labeled_distances, double temperature,
    std::size_t label_count);

/// lambda * p_vanilla + (1 - lambda) * p_knn.
std::vector<double> interpolate(const std::vector<double>& p_vanilla,
                                const std::vector<double>& p_knn, double lambda);

struct TaggedToken {
    int label_id = 0;
    std::vector<double> distribution;
};

/// Full kNN-SL inference for one sentence: encode, retrieve (no exclusion),
/// interpolate, argmax with lowest-id tie-break. Throws ConsistencyError when
/// the store was built from a different encoder checkpoint.
std::vector<TaggedToken> tag_knn(const enc::EncoderParameters& params,
                                 const corpus::Vocab& vocab, const ds::Datastore& store,
                                 const corpus::TokenSequence& sentence,
                                 const InterpConfig& cfg);

int argmax_label(const std::vector<double>& distribution);

}  // namespace gnnsl::knn
