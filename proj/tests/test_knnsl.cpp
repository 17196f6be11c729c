#include <doctest.h>

#include <cmath>
#include <random>

#include "gnnsl/knnsl.hpp"

using namespace gnnsl;
using namespace gnnsl::knn;

namespace {

// Store whose records have controllable labels; keys live on the x axis so
// distances are easy to stage.
ds::Datastore line_store(const std::vector<std::pair<float, std::uint32_t>>& pts,
                         Digest digest = Digest{}) {
    ds::Datastore s(1, {"O", "B-PER", "B-LOC"}, digest);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        ds::Record r;
        r.key = {pts[i].first};
        r.label_id = pts[i].second;
        r.sentence_id = std::uint32_t(i);
        s.add(std::move(r));
    }
    return s;
}

}  // namespace

TEST_CASE("knn_distribution closed forms") {
    // Both neighbors label 1, any distances: all mass on label 1.
    auto s = line_store({{0.f, 1}, {5.f, 1}});
    auto n = ds::knn_query(s, {0.0}, 2);
    auto p = knn_distribution(s, n, 1.0, 3);
    CHECK(p[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p[0] == 0.0);
    CHECK(p[2] == 0.0);

    // Two labels at equal distance: 0.5 / 0.5.
    auto s2 = line_store({{1.f, 1}, {-1.f, 2}});
    auto p2 = knn_distribution(s2, ds::knn_query(s2, {0.0}, 2), 1.0, 3);
    CHECK(p2[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p2[2] == doctest::Approx(0.5).epsilon(1e-12));

    // Distances 0 and ln 3 at T=1: 0.75 / 0.25.
    auto s3 = line_store({{0.f, 1}, {float(std::log(3.0)), 2}});
    auto p3 = knn_distribution(s3, ds::knn_query(s3, {0.0}, 2), 1.0, 3);
    CHECK(p3[1] == doctest::Approx(0.75).epsilon(1e-7));  // f32 key rounding
    CHECK(p3[2] == doctest::Approx(0.25).epsilon(1e-7));
}

TEST_CASE("knn_distribution_raw validates arguments") {
    CHECK_THROWS_AS(knn_distribution_raw({}, 1.0, 2), ArgumentError);
    CHECK_THROWS_AS(knn_distribution_raw({{0, 1.0}}, 0.0, 2), ArgumentError);
    CHECK_THROWS_AS(knn_distribution_raw({{0, 1.0}}, -1.0, 2), ArgumentError);
    auto p = knn_distribution_raw({{0, 0.0}, {1, std::log(3.0)}}, 1.0, 2);
    CHECK(p[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("kernel invariances: distance shift and temperature scaling") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> dist(0.0, 10.0);
    std::uniform_int_distribution<int> lab(0, 4);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::pair<int, double>> nd;
        for (int i = 0; i < 8; ++i) nd.emplace_back(lab(rng), dist(rng));
        double T = 0.5 + dist(rng);
        auto base = knn_distribution_raw(nd, T, 5);

        double c = dist(rng) - 5.0;
        auto shifted = nd;
        for (auto& [l, d] : shifted) d += c;
        auto p_shift = knn_distribution_raw(shifted, T, 5);

        double alpha = 0.25 + dist(rng);
        auto scaled = nd;
        for (auto& [l, d] : scaled) d *= alpha;
        auto p_scale = knn_distribution_raw(scaled, alpha * T, 5);

        double total = 0.0;
        for (int y = 0; y < 5; ++y) {
            CHECK(std::abs(base[y] - p_shift[y]) < 1e-9);
            CHECK(std::abs(base[y] - p_scale[y]) < 1e-9);
            total += base[y];
        }
        CHECK(std::abs(total - 1.0) < 1e-9);
    }
}

TEST_CASE("interpolate endpoints, arithmetic, and monotonicity") {
    std::vector<double> pv = {0.8, 0.2}, pk = {0.2, 0.8};
    CHECK(interpolate(pv, pk, 1.0) == pv);
    CHECK(interpolate(pv, pk, 0.0) == pk);
    auto mid = interpolate(pv, pk, 0.5);
    CHECK(mid[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(mid[1] == doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS(interpolate(pv, {0.5, 0.25, 0.25}, 0.5), DimensionError);
    CHECK_THROWS_AS(interpolate(pv, pk, -0.1), ArgumentError);
    CHECK_THROWS_AS(interpolate(pv, pk, 1.1), ArgumentError);

    // Componentwise monotone in lambda between the endpoints.
    double prev0 = pk[0];
    for (double lam = 0.1; lam <= 1.0; lam += 0.1) {
        auto p = interpolate(pv, pk, lam);
        CHECK(p[0] >= prev0 - 1e-12);
        CHECK(std::abs(p[0] + p[1] - 1.0) < 1e-9);
        prev0 = p[0];
    }
}

TEST_CASE("InterpConfig validation") {
    InterpConfig ok;
    CHECK_NOTHROW(ok.validate());
    InterpConfig bad_k = ok;
    bad_k.k = 0;
    CHECK_THROWS_AS(bad_k.validate(), ArgumentError);
    InterpConfig bad_t = ok;
    bad_t.temperature = 0.0;
    CHECK_THROWS_AS(bad_t.validate(), ArgumentError);
    InterpConfig bad_l = ok;
    bad_l.lambda = 1.5;
    CHECK_THROWS_AS(bad_l.validate(), ArgumentError);
}

namespace {

struct Fixture {
    corpus::ParseResult r = corpus::parse_conll(
        "ann B-PER\nwalks O\n\nrome B-LOC\nshines O\n\nann B-PER\nsings O\n\n"
        "bob B-PER\nruns O\n\nrome B-LOC\ncalls O\n",
        corpus::LabelScheme::BIO);
    corpus::Vocab vocab = corpus::Vocab::build(r.data);
    enc::EncoderParameters params;
    ds::Datastore store;

    Fixture() {
        enc::EncoderConfig cfg;
        cfg.d = 8;
        cfg.d_emb = 6;
        cfg.epochs = 30;
        cfg.seed = 4;
        params = enc::train_vanilla(r.data, nullptr, vocab, r.labels, cfg);
        store = ds::build(params, vocab, r.data, r.labels);
    }
};

}  // namespace

TEST_CASE("tag_knn at lambda=1 reproduces the vanilla argmax") {
    Fixture f;
    InterpConfig cfg;
    cfg.lambda = 1.0;
    cfg.k = 3;
    for (const auto& s : f.r.data.sentences) {
        auto tagged = tag_knn(f.params, f.vocab, f.store, s, cfg);
        REQUIRE(tagged.size() == s.size());
        auto hs = enc::encode(f.params, f.vocab, s);
        for (std::size_t i = 0; i < s.size(); ++i) {
            auto pv = enc::vanilla_predict(f.params, hs[i]).value();
            CHECK(tagged[i].label_id == argmax_label(pv));
        }
    }
}

TEST_CASE("tag_knn at lambda=0, k=1 copies the stored label of an exact key") {
    Fixture f;
    InterpConfig cfg;
    cfg.lambda = 0.0;
    cfg.k = 1;
    // Query sentences are the training sentences themselves: each token's key
    // is in the store at distance 0.
    for (const auto& s : f.r.data.sentences) {
        auto tagged = tag_knn(f.params, f.vocab, f.store, s, cfg);
        for (std::size_t i = 0; i < s.size(); ++i) {
            CHECK(tagged[i].label_id == s.labels[i]);
        }
    }
}

TEST_CASE("tag_knn matches an end-to-end hand-composed oracle") {
    Fixture f;
    InterpConfig cfg;
    cfg.lambda = 0.4;
    cfg.k = 4;
    cfg.temperature = 2.0;
    corpus::TokenSequence query{{"ann", "shines"}, {0, 0}, 0};
    auto tagged = tag_knn(f.params, f.vocab, f.store, query, cfg);

    auto hs = enc::encode(f.params, f.vocab, query);
    for (std::size_t i = 0; i < query.size(); ++i) {
        auto pv = enc::vanilla_predict(f.params, hs[i]).value();
        auto nb = ds::knn_query(f.store, hs[i].value(), cfg.k);
        // Recompute the kernel-weighted label distribution by hand on
        // unsquared distances.
        std::vector<double> pk(f.r.labels.size(), 0.0);
        double dmin = std::sqrt(nb[0].dist2);
        double z = 0.0;
        for (const auto& n : nb) {
            double w = std::exp(-(std::sqrt(n.dist2) - dmin) / cfg.temperature);
            pk[f.store.record(n.record_index).label_id] += w;
            z += w;
        }
        for (auto& v : pk) v /= z;
        std::vector<double> mix(pv.size());
        int best = 0;
        for (std::size_t y = 0; y < pv.size(); ++y) {
            mix[y] = cfg.lambda * pv[y] + (1 - cfg.lambda) * pk[y];
            if (mix[y] > mix[best]) best = int(y);
        }
        CHECK(tagged[i].label_id == best);
        for (std::size_t y = 0; y < mix.size(); ++y) {
            CHECK(tagged[i].distribution[y] == doctest::Approx(mix[y]).epsilon(1e-9));
        }
    }
}

TEST_CASE("tag_knn rejects a store built from a different checkpoint") {
    Fixture f;
    Digest other{};
    other[0] = 0xff;
    ds::Datastore wrong(f.store.d(), f.store.label_names(), other);
    for (const auto& rec : f.store.records()) wrong.add(rec);
    InterpConfig cfg;
    CHECK_THROWS_AS(tag_knn(f.params, f.vocab, wrong, f.r.data.sentences[0], cfg),
                    ConsistencyError);
}

TEST_CASE("argmax_label breaks ties toward the lowest label id") {
    CHECK(argmax_label({0.25, 0.5, 0.5}) == 1);
    CHECK(argmax_label({0.5, 0.25, 0.5}) == 0);
    CHECK_THROWS_AS(argmax_label({}), ArgumentError);
}
