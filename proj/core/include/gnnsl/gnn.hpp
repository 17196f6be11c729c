#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gnnsl/checkpoint.hpp"
#include "gnnsl/datastore.hpp"
#include "gnnsl/encoder.hpp"
#include "gnnsl/graph.hpp"
#include "gnnsl/knnsl.hpp"
#include "gnnsl/numcore.hpp"

namespace gnnsl::gnn {

constexpr std::size_t kNodeTypes = 3;
constexpr std::size_t kEdgeTypes = 4;

struct GnnConfig {
    std::size_t layers = 2;
    std::size_t heads = 8;
    std::size_t d = 64;  // must match the encoder width and divide by heads
    std::size_t k = 32;  // neighbors retrieved per token when building graphs
    std::uint64_t seed = 0;
    double lr = 0.1;
    std::size_t epochs = 10;
    double clip_norm = 5.0;
};

/// Heterogeneous multi-head attention parameters. All projections act on
/// per-head slices of width d_h = d / heads; the relation-contribution tensor
/// mu is shared across heads and layers.
struct GnnParameters {
    GnnConfig cfg;
    std::size_t label_count = 0;

    // Indexed [layer][head][node type] and [layer][head][edge type].
    std::vector<num::Tensor> wk_, wq_, wv_;  // d_h x d_h each
    std::vector<num::Tensor> wphi_;          // d_h x d_h, used in message and attention
    num::Tensor mu;                          // {3, 4, 3}
    std::vector<num::Tensor> wo_merge;       // per layer, d x d (head-merge)
    std::vector<num::Tensor> wo_out;         // per layer x node type, d x d
    num::Tensor label_embed;                 // |Y| x d
    num::Tensor boundary_embed;              // d
    num::Tensor head_w, head_b;              // classification d -> |Y|

    std::size_t head_dim() const { return cfg.d / cfg.heads; }
    num::Tensor& wk(std::size_t l, std::size_t h, graph::NodeType t);
    num::Tensor& wq(std::size_t l, std::size_t h, graph::NodeType t);
    num::Tensor& wv(std::size_t l, std::size_t h, graph::NodeType t);
    num::Tensor& wphi(std::size_t l, std::size_t h, graph::EdgeType e);
    const num::Tensor& wk(std::size_t l, std::size_t h, graph::NodeType t) const;
    const num::Tensor& wq(std::size_t l, std::size_t h, graph::NodeType t) const;
    const num::Tensor& wv(std::size_t l, std::size_t h, graph::NodeType t) const;
    const num::Tensor& wphi(std::size_t l, std::size_t h, graph::EdgeType e) const;
    /// Flat index of mu<tau(s), phi(e), tau(n)>.
    static std::size_t mu_index(graph::NodeType s, graph::EdgeType e, graph::NodeType n);

    std::vector<std::pair<std::string, num::Tensor>> named() const;
    std::vector<num::Tensor> trainable() const;
};

GnnParameters init_gnn(const GnnConfig& cfg, std::size_t label_count);

/// Initial feature tensors per node: constants for input/neighbor nodes,
/// label/boundary embedding rows for the rest.
std::vector<num::Tensor> initial_features(const GnnParameters& p, const graph::TagGraph& g);

/// Per-head message along one edge: (h_s W^v_tau(s)) W_phi(e), row-vector
/// convention, operating on the head slice of h_s.
num::Tensor message(const GnnParameters& p, std::size_t layer, std::size_t head,
                    const num::Tensor& s_feat_head, graph::EdgeType edge_type,
                    graph::NodeType s_type);

struct AttentionResult {
    std::vector<std::size_t> edge_indices;  // into graph.edges, incoming at target
    num::Tensor weights;                    // softmax over those edges; empty if isolated
};

/// Attention over all incoming edges of `target`, all edge types jointly.
AttentionResult attention(const GnnParameters& p, std::size_t layer, std::size_t head,
                          const graph::TagGraph& g,
                          const std::vector<num::Tensor>& features, std::size_t target);

/// One message-passing layer with residual connection.
std::vector<num::Tensor> layer_forward(const GnnParameters& p, std::size_t layer,
                                       const graph::TagGraph& g,
                                       const std::vector<num::Tensor>& features);

/// L layers then the classification head: one probability tensor per input
/// token, in input order.
std::vector<num::Tensor> gnn_forward(const GnnParameters& p, const graph::TagGraph& g);
std::vector<std::vector<double>> gnn_predict(const GnnParameters& p,
                                             const graph::TagGraph& g);

struct GnnTrainLog {
    std::vector<double> epoch_loss;
};

/// Trains the GNN on per-sentence graphs built from the frozen encoder and
/// datastore. Training-time retrieval excludes each query token's own record.
GnnParameters train_gnn(const enc::EncoderParameters& encoder, const corpus::Vocab& vocab,
                        const ds::Datastore& store, const corpus::Dataset& train,
                        const graph::WindowConfig& wcfg, const GnnConfig& cfg,
                        GnnTrainLog* log = nullptr);

enum class GnnMode { Gnn, GnnKnn };

/// GNN-SL inference; GnnKnn interpolates p_GNN with the kNN distribution from
/// the same retrieval (lambda weighs the GNN side).
std::vector<knn::TaggedToken> tag_gnn(const enc::EncoderParameters& encoder,
                                      const corpus::Vocab& vocab,
                                      const ds::Datastore& store, const GnnParameters& p,
                                      const corpus::TokenSequence& sentence,
                                      const graph::WindowConfig& wcfg, GnnMode mode,
                                      double lambda = 0.5, double temperature = 1.0);

ckpt::Container to_container(const GnnParameters& p);
GnnParameters from_container(const ckpt::Container& c);
void save_checkpoint(const std::string& path, const GnnParameters& p);
GnnParameters load_checkpoint(const std::string& path);

}  // namespace gnnsl::gnn
