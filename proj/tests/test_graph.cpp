#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "gnnsl/graph.hpp"

using namespace gnnsl;
using namespace gnnsl::graph;

namespace {

// Store with two source sentences (lengths 2 and 3), d=2, distinct keys.
ds::Datastore demo_store() {
    ds::Datastore s(2, {"O", "B-PER"}, Digest{});
    std::uint32_t labels[] = {0, 1, 1, 0, 1};
    std::size_t n = 0;
    for (std::uint32_t sid = 0; sid < 2; ++sid) {
        std::uint32_t len = sid == 0 ? 2 : 3;
        for (std::uint32_t t = 0; t < len; ++t, ++n) {
            ds::Record r;
            r.key = {float(n), float(10 * n)};
            r.label_id = labels[n];
            r.sentence_id = sid;
            r.token_index = t;
            s.add(std::move(r));
        }
    }
    return s;
}

std::map<EdgeType, std::size_t> count_edges(const TagGraph& g) {
    std::map<EdgeType, std::size_t> c;
    for (const auto& e : g.edges) ++c[e.type];
    return c;
}

std::map<NodeType, std::size_t> count_nodes(const TagGraph& g) {
    std::map<NodeType, std::size_t> c;
    for (const auto& n : g.nodes) ++c[n.type];
    return c;
}

void check_structural_invariants(const TagGraph& g) {
    std::multiset<std::tuple<std::size_t, std::size_t, EdgeType>> fwd, rev;
    for (const auto& e : g.edges) {
        REQUIRE(e.src < g.nodes.size());
        REQUIRE(e.dst < g.nodes.size());
        CHECK(e.src != e.dst);
        auto st = g.nodes[e.src].type, dt = g.nodes[e.dst].type;
        switch (e.type) {
            case EdgeType::InputInput:
                CHECK(st == NodeType::Input);
                CHECK(dt == NodeType::Input);
                break;
            case EdgeType::NeighborInput:
                CHECK(((st == NodeType::Neighbor && dt == NodeType::Input) ||
                       (st == NodeType::Input && dt == NodeType::Neighbor)));
                break;
            case EdgeType::NeighborNeighbor:
                CHECK(st == NodeType::Neighbor);
                CHECK(dt == NodeType::Neighbor);
                break;
            case EdgeType::LabelNeighbor:
                CHECK(((st == NodeType::Label && dt == NodeType::Neighbor) ||
                       (st == NodeType::Neighbor && dt == NodeType::Label)));
                break;
        }
        fwd.insert({e.src, e.dst, e.type});
        rev.insert({e.dst, e.src, e.type});
    }
    // Bidirectional: the directed edge multiset is closed under reversal.
    CHECK(fwd == rev);
    // No duplicate directed edges.
    CHECK(fwd.size() == std::set(fwd.begin(), fwd.end()).size());
}

}  // namespace

TEST_CASE("single token with no neighbors gives one node and no edges") {
    auto store = demo_store();
    auto g = construct({{1.0, 2.0}}, {{}}, store, WindowConfig{0, true});
    CHECK(g.nodes.size() == 1);
    CHECK(g.edges.empty());
    CHECK(g.nodes[0].type == NodeType::Input);
    CHECK(g.nodes[0].feature == std::vector<double>{1.0, 2.0});
    REQUIRE(g.query_map.size() == 1);
    CHECK(g.query_map[0] == 0);
}

TEST_CASE("n=2, k=1, c=0 with labels: hand-enumerated counts") {
    auto store = demo_store();
    std::vector<ds::NeighborSet> nb = {{{0, 0.5}}, {{3, 1.5}}};
    auto g = construct({{0.0, 0.0}, {1.0, 1.0}}, nb, store, WindowConfig{0, true});

    auto nodes = count_nodes(g);
    CHECK(nodes[NodeType::Input] == 2);
    CHECK(nodes[NodeType::Neighbor] == 2);
    CHECK(nodes[NodeType::Label] == 2);

    auto edges = count_edges(g);
    CHECK(edges[EdgeType::InputInput] == 2);
    CHECK(edges[EdgeType::NeighborInput] == 4);
    CHECK(edges[EdgeType::LabelNeighbor] == 4);
    CHECK(edges[EdgeType::NeighborNeighbor] == 0);
    check_structural_invariants(g);

    // Neighbor node features are the stored keys; label provenance recorded.
    for (const auto& node : g.nodes) {
        if (node.type == NodeType::Neighbor) {
            REQUIRE(node.source.has_value());
            auto idx = store.find(*node.source);
            REQUIRE(idx.has_value());
            const auto& rec = store.record(*idx);
            REQUIRE(node.feature.size() == 2);
            CHECK(node.feature[0] == double(rec.key[0]));
            CHECK(node.feature[1] == double(rec.key[1]));
        }
        if (node.type == NodeType::Label) {
            CHECK((node.label_id == 0 || node.label_id == 1));
        }
    }
}

TEST_CASE("window at the sentence start inserts a boundary stand-in") {
    auto store = demo_store();
    // Neighbor center: record 0 = (sentence 0, token 0) of a length-2 sentence.
    auto g = construct({{0.0, 0.0}}, {{{0, 0.25}}}, store, WindowConfig{1, true});

    auto nodes = count_nodes(g);
    CHECK(nodes[NodeType::Neighbor] == 3);  // boundary, center, right
    std::size_t boundaries = 0;
    for (const auto& n : g.nodes) {
        if (n.type == NodeType::Neighbor && n.is_boundary) {
            ++boundaries;
            CHECK(!n.source.has_value());
            CHECK(n.feature.empty());  // boundary embedding supplied at message time
        }
    }
    CHECK(boundaries == 1);
    CHECK(count_edges(g)[EdgeType::NeighborNeighbor] == 6);  // all ordered pairs of 3
    check_structural_invariants(g);
}

TEST_CASE("window at the sentence end inserts boundary stand-ins symmetrically") {
    auto store = demo_store();
    // Record 4 = (sentence 1, token 2), the last token of a length-3 sentence.
    auto g = construct({{0.0, 0.0}}, {{{4, 0.25}}}, store, WindowConfig{2, false});
    // Window positions 0..4 around center 2: tokens 0,1,2 plus 2 overruns.
    auto nodes = count_nodes(g);
    CHECK(nodes[NodeType::Neighbor] == 5);
    CHECK(nodes[NodeType::Label] == 0);  // labels off
    std::size_t boundaries = 0;
    for (const auto& n : g.nodes) boundaries += n.type == NodeType::Neighbor && n.is_boundary;
    CHECK(boundaries == 2);
    CHECK(count_edges(g)[EdgeType::NeighborNeighbor] == 20);
    CHECK(count_edges(g)[EdgeType::LabelNeighbor] == 0);
    check_structural_invariants(g);
}

TEST_CASE("only the neighbor center connects to the input that retrieved it") {
    auto store = demo_store();
    auto g = construct({{0.0, 0.0}}, {{{3, 0.5}}}, store, WindowConfig{1, true});
    // Record 3 = (sentence 1, token 1): window covers tokens 0,1,2; no boundary.
    CHECK(count_nodes(g)[NodeType::Neighbor] == 3);
    CHECK(count_edges(g)[EdgeType::NeighborInput] == 2);  // center <-> input only
    for (const auto& e : g.edges) {
        if (e.type != EdgeType::NeighborInput) continue;
        const auto& nb = g.nodes[g.nodes[e.src].type == NodeType::Neighbor ? e.src : e.dst];
        REQUIRE(nb.source.has_value());
        CHECK(*nb.source == ds::TokenRef{1, 1});
    }
    // The label node sits on the center as well.
    for (const auto& e : g.edges) {
        if (e.type != EdgeType::LabelNeighbor) continue;
        const auto& nb = g.nodes[g.nodes[e.src].type == NodeType::Neighbor ? e.src : e.dst];
        REQUIRE(nb.source.has_value());
        CHECK(*nb.source == ds::TokenRef{1, 1});
    }
}

TEST_CASE("random graphs satisfy the structural invariants and size bound") {
    auto store = demo_store();
    std::mt19937_64 rng(12);
    std::uniform_int_distribution<int> n_dist(1, 4), k_dist(0, 3), c_dist(0, 2);
    for (int trial = 0; trial < 100; ++trial) {
        std::size_t n = n_dist(rng), k = k_dist(rng), c = c_dist(rng);
        bool labels = trial % 2 == 0;
        std::vector<std::vector<double>> reps(n, {0.0, 0.0});
        std::vector<ds::NeighborSet> nbs(n);
        for (auto& nb : nbs) {
            std::set<std::size_t> chosen;
            while (chosen.size() < k) chosen.insert(rng() % store.size());
            for (auto idx : chosen) nb.push_back({idx, double(idx)});
        }
        auto g = construct(reps, nbs, store, WindowConfig{c, labels});
        check_structural_invariants(g);
        CHECK(g.nodes.size() <= n + n * k * (2 * c + 1) + n * k);
        CHECK(count_edges(g)[EdgeType::InputInput] == n * (n - 1));
        CHECK(count_nodes(g)[NodeType::Label] == (labels ? n * k : 0));
        REQUIRE(g.query_map.size() == n);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(g.nodes[g.query_map[i]].type == NodeType::Input);
            CHECK(g.nodes[g.query_map[i]].input_position == int(i));
        }
    }
}

TEST_CASE("construct is deterministic and validates its inputs") {
    auto store = demo_store();
    std::vector<ds::NeighborSet> nb = {{{0, 0.5}, {2, 1.0}}, {{4, 0.1}}};
    auto a = construct({{0.0, 1.0}, {2.0, 3.0}}, nb, store, WindowConfig{1, true});
    auto b = construct({{0.0, 1.0}, {2.0, 3.0}}, nb, store, WindowConfig{1, true});
    CHECK(edge_list_dump(a) == edge_list_dump(b));
    CHECK(a.nodes.size() == b.nodes.size());

    // Mismatched reps/neighbors lengths.
    CHECK_THROWS_AS(construct({{0.0, 1.0}}, nb, store, WindowConfig{1, true}),
                    ArgumentError);
    // Unresolvable provenance: a context position missing from the store.
    ds::Datastore holes(2, {"O"}, Digest{});
    ds::Record r0;
    r0.key = {0.f, 0.f};
    ds::Record r2 = r0;
    r2.token_index = 2;  // token 1 of the sentence is absent
    holes.add(r0);
    holes.add(r2);
    std::vector<ds::NeighborSet> bad = {{{0, 0.5}}};
    CHECK_THROWS_AS(construct({{0.0, 1.0}}, bad, holes, WindowConfig{1, true}),
                    ConsistencyError);
}

TEST_CASE("edge_list_dump golden output for the c=0 example") {
    auto store = demo_store();
    std::vector<ds::NeighborSet> nb = {{{0, 0.5}}, {{3, 1.5}}};
    auto g = construct({{0.0, 0.0}, {1.0, 1.0}}, nb, store, WindowConfig{0, true});
    // Node order: inputs 0,1; then per input its neighbor window + label node.
    CHECK(edge_list_dump(g) ==
          "0 1 INPUT_INPUT\n"
          "1 0 INPUT_INPUT\n"
          "2 0 NEIGHBOR_INPUT\n"
          "0 2 NEIGHBOR_INPUT\n"
          "3 2 LABEL_NEIGHBOR\n"
          "2 3 LABEL_NEIGHBOR\n"
          "4 1 NEIGHBOR_INPUT\n"
          "1 4 NEIGHBOR_INPUT\n"
          "5 4 LABEL_NEIGHBOR\n"
          "4 5 LABEL_NEIGHBOR\n");
}
