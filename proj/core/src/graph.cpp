#include "gnnsl/graph.hpp"

namespace gnnsl::graph {

const char* node_type_name(NodeType t) {
    switch (t) {
        case NodeType::Input: return "INPUT";
        case NodeType::Neighbor: return "NEIGHBOR";
        case NodeType::Label: return "LABEL";
    }
    return "?";
}

const char* edge_type_name(EdgeType t) {
    switch (t) {
        case EdgeType::InputInput: return "INPUT_INPUT";
        case EdgeType::NeighborInput: return "NEIGHBOR_INPUT";
        case EdgeType::NeighborNeighbor: return "NEIGHBOR_NEIGHBOR";
        case EdgeType::LabelNeighbor: return "LABEL_NEIGHBOR";
    }
    return "?";
}

TagGraph construct(const std::vector<std::vector<double>>& sentence_reps,
                   const std::vector<ds::NeighborSet>& neighbors,
                   const ds::Datastore& store, const WindowConfig& cfg) {
    if (sentence_reps.size() != neighbors.size()) {
        throw ArgumentError("construct: one neighbor set per token required");
    }
    TagGraph g;
    std::size_t n = sentence_reps.size();

    for (std::size_t i = 0; i < n; ++i) {
        Node node;
        node.type = NodeType::Input;
        node.feature = sentence_reps[i];
        node.input_position = int(i);
        g.query_map.push_back(g.nodes.size());
        g.nodes.push_back(std::move(node));
    }
    // Input tokens attend to each other: complete directed graph.
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j) g.edges.push_back({g.query_map[i], g.query_map[j],
                                           EdgeType::InputInput});
        }
    }

    long c = long(cfg.context_radius);
    for (std::size_t pos = 0; pos < n; ++pos) {
        for (const auto& nb : neighbors[pos]) {
            const ds::Record& center = store.record(nb.record_index);
            std::size_t len = store.sentence_length(center.sentence_id);
            std::vector<std::size_t> window_nodes;
            std::size_t center_node = SIZE_MAX;
            for (long t = long(center.token_index) - c; t <= long(center.token_index) + c;
                 ++t) {
                Node node;
                node.type = NodeType::Neighbor;
                if (t < 0 || t >= long(len)) {
                    node.is_boundary = true;  // window overruns the source sentence
                } else {
                    ds::TokenRef ref{center.sentence_id, std::uint32_t(t)};
                    auto idx = store.find(ref);
                    if (!idx) {
                        throw ConsistencyError(
                            "construct: neighbor context token not in store (sentence " +
                            std::to_string(ref.sentence_id) + ", token " +
                            std::to_string(ref.token_index) + ")");
                    }
                    node.source = ref;
                    const auto& key = store.record(*idx).key;
                    node.feature.assign(key.begin(), key.end());
                }
                std::size_t id = g.nodes.size();
                g.nodes.push_back(std::move(node));
                window_nodes.push_back(id);
                if (t == long(center.token_index)) center_node = id;
            }
            // Context tokens attend within their own window only.
            for (std::size_t a : window_nodes) {
                for (std::size_t b : window_nodes) {
                    if (a != b) g.edges.push_back({a, b, EdgeType::NeighborNeighbor});
                }
            }
            g.edges.push_back({center_node, g.query_map[pos], EdgeType::NeighborInput});
            g.edges.push_back({g.query_map[pos], center_node, EdgeType::NeighborInput});
            if (cfg.include_labels) {
                Node label_node;
                label_node.type = NodeType::Label;
                label_node.label_id = int(center.label_id);
                std::size_t lid = g.nodes.size();
                g.nodes.push_back(std::move(label_node));
                g.edges.push_back({lid, center_node, EdgeType::LabelNeighbor});
                g.edges.push_back({center_node, lid, EdgeType::LabelNeighbor});
            }
        }
    }
    return g;
}

std::string edge_list_dump(const TagGraph& g) {
    std::string out;
    for (const auto& e : g.edges) {
        out += std::to_string(e.src);
        out += ' ';
        out += std::to_string(e.dst);
        out += ' ';
        out += edge_type_name(e.type);
        out += '\n';
    }
    return out;
}

}  // namespace gnnsl::graph
