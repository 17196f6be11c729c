#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "gnnsl/datastore.hpp"
#include "gnnsl/io.hpp"

using namespace gnnsl;
using namespace gnnsl::ds;

namespace {

Datastore tiny_store(const std::vector<std::vector<float>>& keys,
                     const std::vector<std::uint32_t>& labels = {}) {
    Datastore s(keys.empty() ? 0 : keys[0].size(), {"O", "B-PER"}, Digest{});
    for (std::size_t i = 0; i < keys.size(); ++i) {
        Record r;
        r.key = keys[i];
        r.label_id = labels.empty() ? 0 : labels[i];
        r.sentence_id = std::uint32_t(i);
        r.token_index = 0;
        s.add(std::move(r));
    }
    return s;
}

// Independent full-sort oracle with the same tie-break rule.
std::vector<std::size_t> brute_force(const Datastore& s, const std::vector<double>& h,
                                     std::size_t k, std::optional<TokenRef> exclude) {
    struct Entry {
        double d2;
        std::uint32_t sid, tid;
        std::size_t idx;
    };
    std::vector<Entry> all;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto& r = s.record(i);
        if (exclude && r.sentence_id == exclude->sentence_id &&
            r.token_index == exclude->token_index) {
            continue;
        }
        double d2 = 0.0;
        for (std::size_t j = 0; j < h.size(); ++j) {
            double diff = h[j] - double(r.key[j]);
            d2 += diff * diff;
        }
        all.push_back({d2, r.sentence_id, r.token_index, i});
    }
    std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) {
        if (a.d2 != b.d2) return a.d2 < b.d2;
        if (a.sid != b.sid) return a.sid < b.sid;
        return a.tid < b.tid;
    });
    if (all.size() > k) all.resize(k);
    std::vector<std::size_t> out;
    for (const auto& e : all) out.push_back(e.idx);
    return out;
}

}  // namespace

TEST_CASE("stored key query returns itself at distance 0") {
    auto s = tiny_store({{0.f, 0.f}, {1.f, 0.f}, {3.f, 0.f}});
    auto n = knn_query(s, {1.0, 0.0}, 1);
    REQUIRE(n.size() == 1);
    CHECK(n[0].record_index == 1);
    CHECK(n[0].dist2 == 0.0);
}

TEST_CASE("two-nearest example and exclusion") {
    auto s = tiny_store({{0.f, 0.f}, {1.f, 0.f}, {3.f, 0.f}});
    auto n = knn_query(s, {0.9, 0.0}, 2);
    REQUIRE(n.size() == 2);
    CHECK(s.record(n[0].record_index).key == std::vector<float>{1.f, 0.f});
    CHECK(n[0].dist2 == doctest::Approx(0.01).epsilon(1e-9));
    CHECK(s.record(n[1].record_index).key == std::vector<float>{0.f, 0.f});
    CHECK(n[1].dist2 == doctest::Approx(0.81).epsilon(1e-9));

    auto n2 = knn_query(s, {0.9, 0.0}, 2, TokenRef{1, 0});
    REQUIRE(n2.size() == 2);
    CHECK(s.record(n2[0].record_index).key == std::vector<float>{0.f, 0.f});
    CHECK(s.record(n2[1].record_index).key == std::vector<float>{3.f, 0.f});
}

TEST_CASE("query validation") {
    Datastore empty(2, {"O"}, Digest{});
    CHECK_THROWS_AS(knn_query(empty, {0.0, 0.0}, 1), ArgumentError);

    auto s = tiny_store({{0.f, 0.f}});
    CHECK_THROWS_AS(knn_query(s, {0.0}, 1), DimensionError);
    CHECK_THROWS_AS(knn_query(s, {0.0, 0.0}, 0), ArgumentError);
    // k larger than the store returns everything.
    CHECK(knn_query(s, {0.0, 0.0}, 10).size() == 1);
}

TEST_CASE("knn_query matches the brute-force oracle on 1000 random instances") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> dim_dist(1, 16), size_dist(1, 200), k_dist(1, 40);
    // Quantized coordinates so exact distance ties actually occur.
    std::uniform_int_distribution<int> coord(-2, 2);
    for (int trial = 0; trial < 1000; ++trial) {
        std::size_t d = dim_dist(rng), count = size_dist(rng), k = k_dist(rng);
        Datastore s(d, {"O"}, Digest{});
        for (std::size_t i = 0; i < count; ++i) {
            Record r;
            r.key.resize(d);
            for (auto& v : r.key) v = float(coord(rng));
            // Scrambled provenance exercises the tie-break ordering.
            r.sentence_id = std::uint32_t((i * 37) % 101);
            r.token_index = std::uint32_t(i / 101 + (i % 7));
            while (s.find(TokenRef{r.sentence_id, r.token_index})) ++r.token_index;
            r.label_id = 0;
            s.add(std::move(r));
        }
        std::vector<double> h(d);
        for (auto& v : h) v = coord(rng);
        std::optional<TokenRef> excl;
        if (trial % 3 == 0) {
            const auto& r0 = s.record(std::size_t(rng() % count));
            excl = TokenRef{r0.sentence_id, r0.token_index};
        }
        auto got = knn_query(s, h, k, excl);
        auto want = brute_force(s, h, k, excl);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].record_index == want[i]);
            if (i > 0) CHECK(got[i - 1].dist2 <= got[i].dist2);
            if (excl) {
                const auto& r = s.record(got[i].record_index);
                CHECK(!(r.sentence_id == excl->sentence_id &&
                        r.token_index == excl->token_index));
            }
        }
    }
}

TEST_CASE("build produces one record per token in corpus order") {
    auto r = corpus::parse_conll("a O\nb O\n\nc O\nd O\ne O\nf O\n\ng O\n",
                                 corpus::LabelScheme::BIO);
    auto vocab = corpus::Vocab::build(r.data);
    enc::EncoderConfig cfg;
    cfg.d = 8;
    cfg.d_emb = 4;
    auto p = enc::init_encoder(cfg, vocab.size(), r.labels.size());

    auto s1 = build(p, vocab, r.data, r.labels);
    CHECK(s1.size() == 7);
    CHECK(s1.d() == 8);
    CHECK(s1.source_digest() == enc::checkpoint_digest(p));
    CHECK(s1.sentence_length(1) == 4);

    auto s2 = build(p, vocab, r.data, r.labels);
    CHECK(s1 == s2);

    // Key of (sentence 1, token 2) equals the f32 downcast of encode(...)[2].
    auto hs = enc::encode(p, vocab, r.data.sentences[1]);
    auto idx = s1.find(TokenRef{1, 2});
    REQUIRE(idx.has_value());
    const auto& rec = s1.record(*idx);
    for (std::size_t j = 0; j < 8; ++j) {
        CHECK(rec.key[j] == float(hs[2].value()[j]));
    }
    CHECK(rec.label_id == std::uint32_t(r.data.sentences[1].labels[2]));
}

TEST_CASE("save/load round-trips exactly; truncation and empty stores") {
    auto dir = std::filesystem::temp_directory_path() / "gnnsl_ds_test";
    std::filesystem::create_directories(dir);
    auto path = (dir / "s.gsld").string();

    auto s = tiny_store({{0.5f, -1.25f}, {1.f, 0.f}, {3.f, 2.f}, {0.f, 0.f},
                         {-7.f, 0.125f}, {2.f, 2.f}, {1.f, 1.f}},
                        {0, 1, 0, 1, 0, 1, 0});
    save(s, path);
    auto back = load(path);
    CHECK(back == s);
    CHECK(back.label_names() == s.label_names());

    auto bytes = io::read_file(path);
    for (std::size_t cut : {bytes.size() - 1, bytes.size() / 2, std::size_t(5)}) {
        io::write_file(path, bytes.substr(0, cut));
        try {
            load(path);
            FAIL("expected FormatError at cut ", cut);
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("offset") != std::string::npos);
        }
    }
    io::write_file(path, "XXXX" + bytes.substr(4));
    CHECK_THROWS_AS(load(path), FormatError);

    // Empty store round-trips; querying it is still an error.
    Datastore empty(3, {"O"}, Digest{});
    save(empty, path);
    auto eback = load(path);
    CHECK(eback.size() == 0);
    CHECK(eback.d() == 3);
    CHECK_THROWS_AS(knn_query(eback, {0.0, 0.0, 0.0}, 1), ArgumentError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("add rejects duplicate provenance and wrong widths") {
    Datastore s(2, {"O"}, Digest{});
    Record r;
    r.key = {0.f, 0.f};
    s.add(r);
    CHECK_THROWS_AS(s.add(r), FormatError);  // same (sentence_id, token_index)
    Record bad;
    bad.key = {0.f};
    bad.token_index = 1;
    CHECK_THROWS_AS(s.add(bad), FormatError);
}
