#include "gnnsl/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <random>

namespace gnnsl::gnn {

using graph::EdgeType;
using graph::NodeType;
using num::Tensor;

namespace {

std::size_t proj_index(const GnnConfig& cfg, std::size_t l, std::size_t h, std::size_t t,
                       std::size_t per) {
    return (l * cfg.heads + h) * per + t;
}

Tensor uniform_init(std::vector<std::size_t> shape, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    std::vector<double> vals(n);
    for (auto& v : vals) v = dist(rng);
    return Tensor(std::move(shape), std::move(vals), true);
}

}  // namespace

Tensor& GnnParameters::wk(std::size_t l, std::size_t h, NodeType t) {
    return wk_[proj_index(cfg, l, h, std::size_t(t), kNodeTypes)];
}
Tensor& GnnParameters::wq(std::size_t l, std::size_t h, NodeType t) {
    return wq_[proj_index(cfg, l, h, std::size_t(t), kNodeTypes)];
}
Tensor& GnnParameters::wv(std::size_t l, std::size_t h, NodeType t) {
    return wv_[proj_index(cfg, l, h, std::size_t(t), kNodeTypes)];
}
Tensor& GnnParameters::wphi(std::size_t l, std::size_t h, EdgeType e) {
    return wphi_[proj_index(cfg, l, h, std::size_t(e), kEdgeTypes)];
}
const Tensor& GnnParameters::wk(std::size_t l, std::size_t h, NodeType t) const {
    return wk_[proj_index(cfg, l, h, std::size_t(t), kNodeTypes)];
}
const Tensor& GnnParameters::wq(std::size_t l, std::size_t h, NodeType t) const {
    return wq_[proj_index(cfg, l, h, std::size_t(t), kNodeTypes)];
}
const Tensor& GnnParameters::wv(std::size_t l, std::size_t h, NodeType t) const {
    return wv_[proj_index(cfg, l, h, std::size_t(t), kNodeTypes)];
}
const Tensor& GnnParameters::wphi(std::size_t l, std::size_t h, EdgeType e) const {
    return wphi_[proj_index(cfg, l, h, std::size_t(e), kEdgeTypes)];
}

std::size_t GnnParameters::mu_index(NodeType s, EdgeType e, NodeType n) {
    return (std::size_t(s) * kEdgeTypes + std::size_t(e)) * kNodeTypes + std::size_t(n);
}

std::vector<std::pair<std::string, Tensor>> GnnParameters::named() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        for (std::size_t h = 0; h < cfg.heads; ++h) {
            for (std::size_t t = 0; t < kNodeTypes; ++t) {
                std::string sfx =
                    "_l" + std::to_string(l) + "_h" + std::to_string(h) + "_t" +
                    std::to_string(t);
                out.emplace_back("wk" + sfx, wk_[proj_index(cfg, l, h, t, kNodeTypes)]);
                out.emplace_back("wq" + sfx, wq_[proj_index(cfg, l, h, t, kNodeTypes)]);
                out.emplace_back("wv" + sfx, wv_[proj_index(cfg, l, h, t, kNodeTypes)]);
            }
            for (std::size_t e = 0; e < kEdgeTypes; ++e) {
                std::string sfx =
                    "_l" + std::to_string(l) + "_h" + std::to_string(h) + "_e" +
                    std::to_string(e);
                out.emplace_back("wphi" + sfx, wphi_[proj_index(cfg, l, h, e, kEdgeTypes)]);
            }
        }
        out.emplace_back("wo_merge_l" + std::to_string(l), wo_merge[l]);
        for (std::size_t t = 0; t < kNodeTypes; ++t) {
            out.emplace_back("wo_out_l" + std::to_string(l) + "_t" + std::to_string(t),
                             wo_out[l * kNodeTypes + t]);
        }
    }
    out.emplace_back("mu", mu);
    out.emplace_back("label_embed", label_embed);
    out.emplace_back("boundary_embed", boundary_embed);
    out.emplace_back("head_w", head_w);
    out.emplace_back("head_b", head_b);
    return out;
}

std::vector<Tensor> GnnParameters::trainable() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
}

GnnParameters init_gnn(const GnnConfig& cfg, std::size_t label_count) {
    if (cfg.layers < 1) throw ArgumentError("gnn: layers must be >= 1");
    if (cfg.heads < 1 || cfg.d % cfg.heads != 0) {
        throw ArgumentError("gnn: d must be divisible by the head count");
    }
    GnnParameters p;
    p.cfg = cfg;
    p.label_count = label_count;
    std::mt19937_64 rng(cfg.seed ^ 0xd1b54a32d192ed03ull);
    std::size_t dh = cfg.d / cfg.heads;
    double b_h = 1.0 / std::sqrt(double(dh));
    double b_d = 1.0 / std::sqrt(double(cfg.d));

    std::size_t n_proj = cfg.layers * cfg.heads;
    p.wk_.reserve(n_proj * kNodeTypes);
    for (std::size_t i = 0; i < n_proj * kNodeTypes; ++i) {
        p.wk_.push_back(uniform_init({dh, dh}, b_h, rng));
        p.wq_.push_back(uniform_init({dh, dh}, b_h, rng));
        p.wv_.push_back(uniform_init({dh, dh}, b_h, rng));
    }
    for (std::size_t i = 0; i < n_proj * kEdgeTypes; ++i) {
        p.wphi_.push_back(uniform_init({dh, dh}, b_h, rng));
    }
    // Relation contributions start at 1 so every edge type participates.
    p.mu = Tensor({kNodeTypes, kEdgeTypes, kNodeTypes},
                  std::vector<double>(kNodeTypes * kEdgeTypes * kNodeTypes, 1.0), true);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        p.wo_merge.push_back(uniform_init({cfg.d, cfg.d}, b_d, rng));
        for (std::size_t t = 0; t < kNodeTypes; ++t) {
            p.wo_out.push_back(uniform_init({cfg.d, cfg.d}, b_d, rng));
        }
    }
    p.label_embed = uniform_init({label_count, cfg.d}, b_d, rng);
    p.boundary_embed = uniform_init({cfg.d}, b_d, rng);
    p.head_w = uniform_init({cfg.d, label_count}, b_d, rng);
    p.head_b = uniform_init({label_count}, b_d, rng);
    return p;
}

std::vector<Tensor> initial_features(const GnnParameters& p, const graph::TagGraph& g) {
    std::vector<Tensor> feats;
    feats.reserve(g.nodes.size());
    for (const auto& node : g.nodes) {
        if (node.type == NodeType::Label) {
            feats.push_back(num::row(p.label_embed, std::size_t(node.label_id)));
        } else if (node.is_boundary) {
            feats.push_back(p.boundary_embed);
        } else {
            if (node.feature.size() != p.cfg.d) {
                throw DimensionError("gnn: node feature width " +
                                     std::to_string(node.feature.size()) +
                                     " does not match d=" + std::to_string(p.cfg.d));
            }
            feats.push_back(Tensor::vector(node.feature));
        }
    }
    return feats;
}

Tensor message(const GnnParameters& p, std::size_t layer, std::size_t head,
               const Tensor& s_feat_head, EdgeType edge_type, NodeType s_type) {
    if (s_feat_head.numel() != p.head_dim()) {
        throw DimensionError("message: head slice width must be " +
                             std::to_string(p.head_dim()));
    }
    return num::matmul(num::matmul(s_feat_head, p.wv(layer, head, s_type)),
                       p.wphi(layer, head, edge_type));
}

namespace {

Tensor head_slice(const Tensor& feat, std::size_t head, std::size_t dh) {
    return num::slice(feat, head * dh, dh);
}

Tensor edge_logit(const GnnParameters& p, const Tensor& kphi_src, const Tensor& q_dst,
                  NodeType s_type, EdgeType e_type, NodeType n_type) {
    Tensor dot = num::matmul(kphi_src, q_dst);  // scalar
    Tensor mu = num::pick(p.mu, GnnParameters::mu_index(s_type, e_type, n_type));
    return num::scale(num::mul(dot, mu), 1.0 / std::sqrt(double(p.head_dim())));
}

}  // namespace

AttentionResult attention(const GnnParameters& p, std::size_t layer, std::size_t head,
                          const graph::TagGraph& g, const std::vector<Tensor>& features,
                          std::size_t target) {
    AttentionResult res;
    std::size_t dh = p.head_dim();
    NodeType n_type = g.nodes[target].type;
    Tensor q = num::matmul(head_slice(features[target], head, dh),
                           p.wq(layer, head, n_type));
    std::vector<Tensor> logits;
    for (std::size_t i = 0; i < g.edges.size(); ++i) {
        const auto& e = g.edges[i];
        if (e.dst != target) continue;
        NodeType s_type = g.nodes[e.src].type;
        Tensor k = num::matmul(head_slice(features[e.src], head, dh),
                               p.wk(layer, head, s_type));
        Tensor kphi = num::matmul(k, p.wphi(layer, head, e.type));
        logits.push_back(edge_logit(p, kphi, q, s_type, e.type, n_type));
        res.edge_indices.push_back(i);
    }
    if (logits.empty()) return res;  // isolated node keeps only its residual
    res.weights = num::softmax(num::concat(logits));
    return res;
}

std::vector<Tensor> layer_forward(const GnnParameters& p, std::size_t layer,
                                  const graph::TagGraph& g,
                                  const std::vector<Tensor>& features) {
    std::size_t n_nodes = g.nodes.size();
    std::size_t heads = p.cfg.heads;
    std::size_t dh = p.head_dim();
    if (features.size() != n_nodes) {
        throw ArgumentError("layer_forward: one feature per node required");
    }
    for (const auto& f : features) {
        if (f.numel() != p.cfg.d) {
            throw DimensionError("layer_forward: feature width must be " +
                                 std::to_string(p.cfg.d));
        }
    }

    std::vector<std::vector<std::size_t>> incoming(n_nodes);
    for (std::size_t i = 0; i < g.edges.size(); ++i) incoming[g.edges[i].dst].push_back(i);

    // head_parts[n] collects the per-head aggregates for node n.
    std::vector<std::vector<Tensor>> head_parts(n_nodes);

    for (std::size_t h = 0; h < heads; ++h) {
        std::vector<Tensor> K(n_nodes), Q(n_nodes), V(n_nodes);
        for (std::size_t i = 0; i < n_nodes; ++i) {
            Tensor fs = head_slice(features[i], h, dh);
            NodeType t = g.nodes[i].type;
            K[i] = num::matmul(fs, p.wk(layer, h, t));
            Q[i] = num::matmul(fs, p.wq(layer, h, t));
            V[i] = num::matmul(fs, p.wv(layer, h, t));
        }
        // (source, edge type) -> projected key and message, shared across
        // every edge with that pair.
        std::vector<std::array<Tensor, kEdgeTypes>> kphi(n_nodes), msg(n_nodes);
        auto source_pair = [&](std::size_t s, EdgeType e) {
            auto& kp = kphi[s][std::size_t(e)];
            if (!kp.defined()) {
                kp = num::matmul(K[s], p.wphi(layer, h, e));
                msg[s][std::size_t(e)] = num::matmul(V[s], p.wphi(layer, h, e));
            }
            return std::pair{kp, msg[s][std::size_t(e)]};
        };

        for (std::size_t n = 0; n < n_nodes; ++n) {
            if (incoming[n].empty()) continue;
            NodeType n_type = g.nodes[n].type;
            std::vector<Tensor> logits, msgs;
            logits.reserve(incoming[n].size());
            msgs.reserve(incoming[n].size());
            for (std::size_t ei : incoming[n]) {
                const auto& e = g.edges[ei];
                auto [kp, m] = source_pair(e.src, e.type);
                logits.push_back(
                    edge_logit(p, kp, Q[n], g.nodes[e.src].type, e.type, n_type));
                msgs.push_back(m);
            }
            Tensor weights = num::softmax(num::concat(logits));
            Tensor acc = num::smul(msgs[0], num::pick(weights, 0));
            for (std::size_t j = 1; j < msgs.size(); ++j) {
                acc = num::add(acc, num::smul(msgs[j], num::pick(weights, j)));
            }
            head_parts[n].push_back(acc);
        }
    }

    std::vector<Tensor> out(n_nodes);
    for (std::size_t n = 0; n < n_nodes; ++n) {
        if (head_parts[n].empty()) {
            out[n] = features[n];  // isolated: pure residual
            continue;
        }
        Tensor merged = num::matmul(num::concat(head_parts[n]), p.wo_merge[layer]);
        Tensor agg = num::matmul(merged, p.wo_out[layer * kNodeTypes +
                                                  std::size_t(g.nodes[n].type)]);
        out[n] = num::add(features[n], agg);
    }
    return out;
}

std::vector<Tensor> gnn_forward(const GnnParameters& p, const graph::TagGraph& g) {
    std::vector<Tensor> feats = initial_features(p, g);
    for (std::size_t l = 0; l < p.cfg.layers; ++l) {
        feats = layer_forward(p, l, g, feats);
    }
    std::vector<Tensor> out;
    out.reserve(g.query_map.size());
    for (std::size_t node_id : g.query_map) {
        Tensor logits = num::add(num::matmul(feats[node_id], p.head_w), p.head_b);
        out.push_back(num::softmax(logits));
    }
    return out;
}

std::vector<std::vector<double>> gnn_predict(const GnnParameters& p,
                                             const graph::TagGraph& g) {
    num::NoGrad ng;
    std::vector<std::vector<double>> out;
    for (const auto& t : gnn_forward(p, g)) out.push_back(t.value());
    return out;
}

namespace {

struct SentenceContext {
    std::vector<std::vector<double>> reps;
    std::vector<ds::NeighborSet> neighbors;
};

SentenceContext sentence_context(const enc::EncoderParameters& encoder,
                                 const corpus::Vocab& vocab, const ds::Datastore& store,
                                 const corpus::TokenSequence& sent, std::size_t k,
                                 bool exclude_self) {
    num::NoGrad ng;
    SentenceContext ctx;
    auto hs = enc::encode(encoder, vocab, sent);
    for (std::size_t i = 0; i < sent.size(); ++i) {
        ctx.reps.push_back(hs[i].value());
        std::optional<ds::TokenRef> exclude;
        if (exclude_self) exclude = ds::TokenRef{sent.id, std::uint32_t(i)};
        ctx.neighbors.push_back(ds::knn_query(store, ctx.reps.back(), k, exclude));
    }
    return ctx;
}

void check_digest(const enc::EncoderParameters& encoder, const ds::Datastore& store,
                  const char* who) {
    if (enc::checkpoint_digest(encoder) != store.source_digest()) {
        throw ConsistencyError(std::string(who) +
                               ": datastore was built from a different encoder checkpoint");
    }
}

}  // namespace

GnnParameters train_gnn(const enc::EncoderParameters& encoder, const corpus::Vocab& vocab,
                        const ds::Datastore& store, const corpus::Dataset& train,
                        const graph::WindowConfig& wcfg, const GnnConfig& cfg,
                        GnnTrainLog* log) {
    if (train.sentences.empty()) throw ArgumentError("train_gnn: empty dataset");
    check_digest(encoder, store, "train_gnn");
    if (cfg.d != encoder.cfg.d) {
        throw DimensionError("train_gnn: gnn d must match encoder d");
    }
    GnnParameters p = init_gnn(cfg, store.label_names().size());
    auto params = p.trainable();
    std::mt19937_64 rng(cfg.seed ^ 0xa0761d6478bd642full);

    // Frozen encoder and store: retrieval is fixed, so build every graph once.
    std::vector<graph::TagGraph> graphs;
    graphs.reserve(train.sentences.size());
    for (const auto& sent : train.sentences) {
        auto ctx = sentence_context(encoder, vocab, store, sent, cfg.k, true);
        graphs.push_back(graph::construct(ctx.reps, ctx.neighbors, store, wcfg));
    }

    std::vector<std::size_t> order(train.sentences.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total_loss = 0.0;
        std::size_t total_tokens = 0;
        for (std::size_t idx : order) {
            const auto& sent = train.sentences[idx];
            auto probs = gnn_forward(p, graphs[idx]);
            std::vector<Tensor> nlls;
            nlls.reserve(sent.size());
            for (std::size_t i = 0; i < sent.size(); ++i) {
                nlls.push_back(num::scale(
                    num::log_t(num::pick(probs[i], std::size_t(sent.labels[i]))), -1.0));
            }
            Tensor loss = num::mean(num::concat(nlls));
            total_loss += loss.item() * double(sent.size());
            total_tokens += sent.size();
            num::backward(loss);
            enc::sgd_step(params, cfg.lr, cfg.clip_norm);
        }
        double avg = total_loss / double(total_tokens);
        if (log != nullptr) log->epoch_loss.push_back(avg);
        std::clog << "[train-gnn] epoch " << epoch + 1 << "/" << cfg.epochs << " loss "
                  << avg << "\n";
    }
    return p;
}

std::vector<knn::TaggedToken> tag_gnn(const enc::EncoderParameters& encoder,
                                      const corpus::Vocab& vocab, const ds::Datastore& store,
                                      const GnnParameters& p,
                                      const corpus::TokenSequence& sentence,
                                      const graph::WindowConfig& wcfg, GnnMode mode,
                                      double lambda, double temperature) {
    check_digest(encoder, store, "tag_gnn");
    num::NoGrad ng;
    auto ctx = sentence_context(encoder, vocab, store, sentence, p.cfg.k, false);
    auto g = graph::construct(ctx.reps, ctx.neighbors, store, wcfg);
    auto probs = gnn_predict(p, g);

    std::vector<knn::TaggedToken> out;
    out.reserve(sentence.size());
    for (std::size_t i = 0; i < sentence.size(); ++i) {
        knn::TaggedToken t;
        if (mode == GnnMode::GnnKnn) {
            auto p_knn = knn::knn_distribution(store, ctx.neighbors[i], temperature,
                                               probs[i].size());
            t.distribution = knn::interpolate(probs[i], p_knn, lambda);
        } else {
            t.distribution = probs[i];
        }
        t.label_id = knn::argmax_label(t.distribution);
        out.push_back(std::move(t));
    }
    return out;
}

ckpt::Container to_container(const GnnParameters& p) {
    ckpt::Container c;
    c.magic = "GSLG";
    c.config = {{"layers", std::to_string(p.cfg.layers)},
                {"heads", std::to_string(p.cfg.heads)},
                {"d", std::to_string(p.cfg.d)},
                {"k", std::to_string(p.cfg.k)},
                {"seed", std::to_string(p.cfg.seed)},
                {"lr", std::to_string(p.cfg.lr)},
                {"epochs", std::to_string(p.cfg.epochs)},
                {"clip_norm", std::to_string(p.cfg.clip_norm)},
                {"label_count", std::to_string(p.label_count)}};
    for (auto& [name, t] : p.named()) c.tensors.emplace_back(name, t);
    return c;
}

GnnParameters from_container(const ckpt::Container& c) {
    auto get = [&](const char* key) {
        auto it = c.config.find(key);
        if (it == c.config.end()) throw FormatError(std::string("checkpoint: missing ") + key);
        return it->second;
    };
    GnnConfig cfg;
    cfg.layers = std::stoul(get("layers"));
    cfg.heads = std::stoul(get("heads"));
    cfg.d = std::stoul(get("d"));
    cfg.k = std::stoul(get("k"));
    cfg.seed = std::stoull(get("seed"));
    cfg.lr = std::stod(get("lr"));
    cfg.epochs = std::stoul(get("epochs"));
    cfg.clip_norm = std::stod(get("clip_norm"));
    std::size_t label_count = std::stoul(get("label_count"));

    GnnParameters p = init_gnn(cfg, label_count);
    std::map<std::string, Tensor> by_name;
    for (const auto& [name, t] : c.tensors) by_name.emplace(name, t);
    for (auto& [name, t] : p.named()) {
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw FormatError("checkpoint: missing tensor " + name);
        }
        if (it->second.shape() != t.shape()) {
            throw FormatError("checkpoint: shape mismatch for tensor " + name);
        }
        t.mutable_value() = it->second.value();
    }
    return p;
}

void save_checkpoint(const std::string& path, const GnnParameters& p) {
    ckpt::save(path, to_container(p));
}

GnnParameters load_checkpoint(const std::string& path) {
    return from_container(ckpt::load(path, "GSLG"));
}

}  // namespace gnnsl::gnn
