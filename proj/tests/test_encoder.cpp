#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "gnnsl/encoder.hpp"

using namespace gnnsl;
using namespace gnnsl::enc;

namespace {

corpus::ParseResult toy_corpus() {
    return corpus::parse_conll(
        "alice B-PER\nvisits O\nparis B-LOC\n\n"
        "bob B-PER\nlikes O\nrome B-LOC\n\n"
        "acme B-ORG\nhires O\nalice B-PER\n\n"
        "rome B-LOC\nwelcomes O\nbob B-PER\n\n"
        "acme B-ORG\nopens O\nin O\nparis B-LOC\n\n"
        "alice B-PER\njoins O\nacme B-ORG\n\n"
        "bob B-PER\nleaves O\nrome B-LOC\n\n"
        "paris B-LOC\nhosts O\nacme B-ORG\n\n"
        "alice B-PER\nmeets O\nbob B-PER\n\n"
        "acme B-ORG\nexpands O\n",
        corpus::LabelScheme::BIO);
}

EncoderConfig small_config() {
    EncoderConfig cfg;
    cfg.d = 8;
    cfg.d_emb = 6;
    cfg.lr = 0.3;
    cfg.epochs = 50;
    cfg.seed = 7;
    return cfg;
}

bool same_params(const EncoderParameters& a, const EncoderParameters& b) {
    auto na = a.named(), nb = b.named();
    if (na.size() != nb.size()) return false;
    for (std::size_t i = 0; i < na.size(); ++i) {
        if (na[i].first != nb[i].first) return false;
        if (na[i].second.value() != nb[i].second.value()) return false;
        if (na[i].second.shape() != nb[i].second.shape()) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("encode is deterministic with the right shapes") {
    auto r = toy_corpus();
    auto vocab = corpus::Vocab::build(r.data);
    auto p = init_encoder(small_config(), vocab.size(), r.labels.size());

    const auto& s = r.data.sentences[0];
    auto h1 = encode(p, vocab, s);
    auto h2 = encode(p, vocab, s);
    REQUIRE(h1.size() == s.size());
    for (std::size_t i = 0; i < h1.size(); ++i) {
        CHECK(h1[i].shape() == std::vector<std::size_t>{8});
        CHECK(h1[i].value() == h2[i].value());
    }

    corpus::TokenSequence single{{"alice"}, {1}, 0};
    auto hs = encode(p, vocab, single);
    CHECK(hs.size() == 1);
}

TEST_CASE("permuting two distinct tokens changes a representation") {
    auto r = toy_corpus();
    auto vocab = corpus::Vocab::build(r.data);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto cfg = small_config();
        cfg.seed = seed;
        auto p = init_encoder(cfg, vocab.size(), r.labels.size());
        corpus::TokenSequence ab{{"alice", "bob"}, {1, 1}, 0};
        corpus::TokenSequence ba{{"bob", "alice"}, {1, 1}, 0};
        auto h_ab = encode(p, vocab, ab);
        auto h_ba = encode(p, vocab, ba);
        bool changed = h_ab[0].value() != h_ba[0].value() ||
                       h_ab[1].value() != h_ba[1].value();
        CHECK(changed);
    }
}

TEST_CASE("vanilla_predict is a valid distribution and rejects bad widths") {
    auto r = toy_corpus();
    auto vocab = corpus::Vocab::build(r.data);
    auto p = init_encoder(small_config(), vocab.size(), r.labels.size());

    auto h = encode(p, vocab, r.data.sentences[0])[0];
    auto probs = vanilla_predict(p, h);
    double total = 0.0;
    for (double v : probs.value()) {
        CHECK(v >= 0.0);
        total += v;
    }
    CHECK(std::abs(total - 1.0) < 1e-9);
    auto probs2 = vanilla_predict(p, h);
    CHECK(probs.value() == probs2.value());

    CHECK_THROWS_AS(vanilla_predict(p, num::Tensor::zeros({3})), DimensionError);
}

TEST_CASE("zero MLP weights give the uniform distribution") {
    auto r = toy_corpus();
    auto vocab = corpus::Vocab::build(r.data);
    auto p = init_encoder(small_config(), vocab.size(), r.labels.size());
    for (auto* t : {&p.w1, &p.b1, &p.w2, &p.b2}) {
        for (auto& v : t->mutable_value()) v = 0.0;
    }
    auto h = encode(p, vocab, r.data.sentences[0])[0];
    auto probs = vanilla_predict(p, h).value();
    for (double v : probs) {
        CHECK(v == doctest::Approx(1.0 / double(r.labels.size())).epsilon(1e-12));
    }
}

TEST_CASE("train_vanilla: determinism, loss decrease, memorization") {
    auto r = toy_corpus();
    auto vocab = corpus::Vocab::build(r.data);

    auto cfg = small_config();
    TrainLog log_a, log_b;
    auto a = train_vanilla(r.data, nullptr, vocab, r.labels, cfg, &log_a);
    auto b = train_vanilla(r.data, nullptr, vocab, r.labels, cfg, &log_b);
    CHECK(same_params(a, b));
    CHECK(log_a.epoch_loss == log_b.epoch_loss);
    REQUIRE(log_a.epoch_loss.size() == cfg.epochs);
    CHECK(log_a.epoch_loss.back() < log_a.epoch_loss.front());

    auto cfg2 = cfg;
    cfg2.seed = 8;
    auto c = train_vanilla(r.data, nullptr, vocab, r.labels, cfg2);
    CHECK(!same_params(a, c));

    // Enough epochs to memorize the 10-sentence corpus.
    auto mem_cfg = cfg;
    mem_cfg.epochs = 200;
    auto m = train_vanilla(r.data, nullptr, vocab, r.labels, mem_cfg);
    CHECK(token_accuracy(m, vocab, r.data) == doctest::Approx(1.0));

    CHECK_THROWS_AS(train_vanilla(corpus::Dataset{}, nullptr, vocab, r.labels, cfg),
                    ArgumentError);
}

TEST_CASE("dev accuracy is logged when a dev split is given") {
    auto r = toy_corpus();
    auto vocab = corpus::Vocab::build(r.data);
    auto cfg = small_config();
    cfg.epochs = 3;
    TrainLog log;
    train_vanilla(r.data, &r.data, vocab, r.labels, cfg, &log);
    REQUIRE(log.dev_accuracy.size() == 3);
    for (double acc : log.dev_accuracy) {
        CHECK(acc >= 0.0);
        CHECK(acc <= 1.0);
    }
}

TEST_CASE("full encoder loss gradient passes finite differences at 1e-3") {
    auto r = toy_corpus();
    auto vocab = corpus::Vocab::build(r.data);
    auto cfg = small_config();
    cfg.d = 4;
    cfg.d_emb = 4;
    auto p = init_encoder(cfg, vocab.size(), r.labels.size());

    // Batch loss over 3 sentences as a function of one parameter tensor.
    auto batch_loss = [&](const EncoderParameters& q) {
        num::Tensor total = num::Tensor::scalar(0.0);
        for (std::size_t si = 0; si < 3; ++si) {
            const auto& s = r.data.sentences[si];
            auto hs = encode(q, vocab, s);
            for (std::size_t i = 0; i < s.size(); ++i) {
                auto prob = vanilla_predict(q, hs[i]);
                total = num::add(total, num::scale(num::log_t(num::pick(prob, s.labels[i])), -1.0));
            }
        }
        return total;
    };

    for (auto& [name, param] : p.named()) {
        auto f = [&](const num::Tensor& x) {
            EncoderParameters q = p;
            // Rebind the tensor under test so grad_check's perturbations flow.
            for (auto& [n2, t2] : std::vector<std::pair<std::string, num::Tensor*>>{
                     {"embed", &q.embed}, {"wxf", &q.wxf}, {"whf", &q.whf}, {"bf", &q.bf},
                     {"wxb", &q.wxb},     {"whb", &q.whb}, {"bb", &q.bb},   {"w1", &q.w1},
                     {"b1", &q.b1},       {"w2", &q.w2},   {"b2", &q.b2}}) {
                if (n2 == name) *t2 = x;
            }
            return batch_loss(q);
        };
        auto report = num::grad_check(f, param, 1e-5, 1e-3);
        INFO("parameter ", name);
        CHECK(report.pass);
    }
}

TEST_CASE("sgd_step clips the global gradient norm") {
    auto w = num::Tensor::vector({0.0, 0.0}, true);
    w.grad() = {30.0, 40.0};  // norm 50, clipped to 5 => scaled by 0.1
    sgd_step({w}, 1.0, 5.0);
    CHECK(w.value()[0] == doctest::Approx(-3.0));
    CHECK(w.value()[1] == doctest::Approx(-4.0));
    CHECK(w.grad()[0] == 0.0);

    auto v = num::Tensor::vector({0.0}, true);
    v.grad() = {2.0};  // under the clip threshold: untouched
    sgd_step({v}, 0.5, 5.0);
    CHECK(v.value()[0] == doctest::Approx(-1.0));
}

TEST_CASE("checkpoint round-trip preserves parameters and digest") {
    auto r = toy_corpus();
    auto vocab = corpus::Vocab::build(r.data);
    auto cfg = small_config();
    cfg.epochs = 5;
    auto p = train_vanilla(r.data, nullptr, vocab, r.labels, cfg);

    auto dir = std::filesystem::temp_directory_path() / "gnnsl_enc_test";
    std::filesystem::create_directories(dir);
    auto path = (dir / "m.gsle").string();
    save_checkpoint(path, p);
    auto q = load_checkpoint(path);
    CHECK(same_params(p, q));
    CHECK(q.cfg.d == p.cfg.d);
    CHECK(q.cfg.d_emb == p.cfg.d_emb);
    CHECK(q.vocab_size == p.vocab_size);
    CHECK(q.label_count == p.label_count);
    CHECK(checkpoint_digest(q) == checkpoint_digest(p));

    // Reloaded parameters produce identical predictions.
    auto h = encode(p, vocab, r.data.sentences[0]);
    auto h2 = encode(q, vocab, r.data.sentences[0]);
    CHECK(h[0].value() == h2[0].value());
    std::filesystem::remove_all(dir);
}

TEST_CASE("dropout perturbs training but not inference") {
    auto r = toy_corpus();
    auto vocab = corpus::Vocab::build(r.data);
    auto cfg = small_config();
    cfg.epochs = 5;
    auto base = train_vanilla(r.data, nullptr, vocab, r.labels, cfg);
    auto cfg_do = cfg;
    cfg_do.dropout = 0.5;
    auto dropped = train_vanilla(r.data, nullptr, vocab, r.labels, cfg_do);
    CHECK(!same_params(base, dropped));

    // encode without an rng never applies dropout even when cfg.dropout > 0.
    auto h1 = encode(dropped, vocab, r.data.sentences[0]);
    auto h2 = encode(dropped, vocab, r.data.sentences[0]);
    CHECK(h1[0].value() == h2[0].value());
}
