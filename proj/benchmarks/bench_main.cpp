#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "gnnsl/datastore.hpp"
#include "gnnsl/encoder.hpp"
#include "gnnsl/gnn.hpp"
#include "gnnsl/graph.hpp"
#include "gnnsl/knnsl.hpp"

namespace {

using namespace gnnsl;

ds::Datastore make_store(std::size_t n, std::size_t d, std::uint64_t seed = 42) {
    ds::Datastore store(d, {"O", "B-PER", "I-PER"}, Digest{});
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    for (std::size_t i = 0; i < n; ++i) {
        ds::Record r;
        r.key.resize(d);
        for (auto& v : r.key) v = dist(rng);
        r.label_id = std::uint32_t(i % 3);
        r.sentence_id = std::uint32_t(i / 8);
        r.token_index = std::uint32_t(i % 8);
        store.add(std::move(r));
    }
    return store;
}

std::vector<double> make_query(std::size_t d, std::uint64_t seed = 7) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> q(d);
    for (auto& v : q) v = dist(rng);
    return q;
}

void BM_KnnQuery(benchmark::State& state) {
    const auto n = std::size_t(state.range(0));
    const std::size_t d = 64, k = 32;
    auto store = make_store(n, d);
    auto q = make_query(d);
    for (auto _ : state) {
        benchmark::DoNotOptimize(ds::knn_query(store, q, k));
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(n));
}
BENCHMARK(BM_KnnQuery)->Arg(1000)->Arg(10000)->Arg(100000);

void BM_KnnDistribution(benchmark::State& state) {
    const std::size_t d = 64, k = std::size_t(state.range(0));
    auto store = make_store(4096, d);
    auto q = make_query(d);
    auto neighbors = ds::knn_query(store, q, k);
    for (auto _ : state) {
        benchmark::DoNotOptimize(knn::knn_distribution(store, neighbors, 10.0, 3));
    }
}
BENCHMARK(BM_KnnDistribution)->Arg(8)->Arg(32)->Arg(128);

void BM_Encode(benchmark::State& state) {
    enc::EncoderConfig cfg;
    cfg.d = std::size_t(state.range(0));
    cfg.d_emb = cfg.d / 2;
    auto vocab = corpus::Vocab::from_tokens({"<s>", "<unk>", "a", "b", "c", "d"});
    auto params = enc::init_encoder(cfg, vocab.size(), 3);
    corpus::TokenSequence sentence;
    for (int i = 0; i < 16; ++i) sentence.tokens.push_back(i % 2 ? "a" : "b");
    num::NoGrad ng;
    for (auto _ : state) {
        benchmark::DoNotOptimize(enc::encode(params, vocab, sentence));
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * 16);
}
BENCHMARK(BM_Encode)->Arg(32)->Arg(64)->Arg(128);

struct GraphSetup {
    ds::Datastore store;
    std::vector<std::vector<double>> reps;
    std::vector<ds::NeighborSet> neighbors;
    graph::WindowConfig cfg;
};

GraphSetup make_graph_setup(std::size_t d, std::size_t tokens, std::size_t k,
                            std::size_t radius) {
    GraphSetup s{make_store(512, d), {}, {}, {}};
    s.cfg.context_radius = radius;
    for (std::size_t i = 0; i < tokens; ++i) {
        s.reps.push_back(make_query(d, 100 + i));
        s.neighbors.push_back(ds::knn_query(s.store, s.reps.back(), k));
    }
    return s;
}

void BM_GraphConstruct(benchmark::State& state) {
    auto s = make_graph_setup(64, 16, std::size_t(state.range(0)), 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(graph::construct(s.reps, s.neighbors, s.store, s.cfg));
    }
}
BENCHMARK(BM_GraphConstruct)->Arg(8)->Arg(32);

void BM_GnnForward(benchmark::State& state) {
    const std::size_t d = 64;
    auto s = make_graph_setup(d, 8, 8, std::size_t(state.range(0)));
    auto g = graph::construct(s.reps, s.neighbors, s.store, s.cfg);
    gnn::GnnConfig cfg;
    cfg.d = d;
    cfg.layers = 2;
    cfg.heads = 8;
    auto params = gnn::init_gnn(cfg, 3);
    num::NoGrad ng;
    for (auto _ : state) {
        benchmark::DoNotOptimize(gnn::gnn_predict(params, g));
    }
}
BENCHMARK(BM_GnnForward)->Arg(1)->Arg(3);

}  // namespace

BENCHMARK_MAIN();
