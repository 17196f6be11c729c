#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gnnsl/datastore.hpp"

namespace gnnsl::graph {

enum class NodeType { Input, Neighbor, Label };
enum class EdgeType { InputInput, NeighborInput, NeighborNeighbor, LabelNeighbor };

const char* node_type_name(NodeType t);
const char* edge_type_name(EdgeType t);

struct Node {
    NodeType type = NodeType::Input;
    /// Width-d initial feature. Empty for Label nodes and boundary stand-ins,
    /// whose features come from learnable embedding tables at message time.
    std::vector<double> feature;

    // Provenance.
    int input_position = -1;                 // Input nodes
    std::optional<ds::TokenRef> source;      // Neighbor nodes backed by a record
    bool is_boundary = false;                // Neighbor node for a window overrun
    int label_id = -1;                       // Label nodes
};

struct Edge {
    std::size_t src = 0;
    std::size_t dst = 0;
    EdgeType type = EdgeType::InputInput;

    bool operator==(const Edge&) const = default;
};

struct TagGraph {
    std::vector<Node> nodes;
    std::vector<Edge> edges;
    std::vector<std::size_t> query_map;  // input position -> node id
};

struct WindowConfig {
    std::size_t context_radius = 3;  // window size 2c+1
    bool include_labels = true;
};

/// Builds the typed graph for one sentence: Input nodes carry the encoder
/// representations, each retrieved neighbor contributes a window of Neighbor
/// nodes around its center (boundary stand-ins where the window overruns the
/// source sentence) and, optionally, a Label node on the center.
TagGraph construct(const std::vector<std::vector<double>>& sentence_reps,
                   const std::vector<ds::NeighborSet>& neighbors,
                   const ds::Datastore& store, const WindowConfig& cfg);

/// "src_id dst_id EDGE_TYPE" per directed edge, for golden-file tests.
std::string edge_list_dump(const TagGraph& g);

}  // namespace gnnsl::graph
