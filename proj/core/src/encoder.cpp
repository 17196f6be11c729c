#include "gnnsl/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace gnnsl::enc {

using num::Tensor;

namespace {

Tensor uniform_init(std::vector<std::size_t> shape, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    std::vector<double> vals(n);
    for (auto& v : vals) v = dist(rng);
    return Tensor(std::move(shape), std::move(vals), true);
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> EncoderParameters::named() const {
    return {{"embed", embed}, {"wxf", wxf}, {"whf", whf}, {"bf", bf},
            {"wxb", wxb},     {"whb", whb}, {"bb", bb},   {"w1", w1},
            {"b1", b1},       {"w2", w2},   {"b2", b2}};
}

std::vector<Tensor> EncoderParameters::trainable() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
}

EncoderParameters init_encoder(const EncoderConfig& cfg, std::size_t vocab_size,
                               std::size_t label_count) {
    if (cfg.d == 0 || cfg.d % 2 != 0) {
        throw ArgumentError("encoder: d must be a positive even number");
    }
    std::mt19937_64 rng(cfg.seed);
    std::size_t hd = cfg.d / 2;
    double b_emb = 1.0 / std::sqrt(double(cfg.d_emb));
    double b_h = 1.0 / std::sqrt(double(hd));
    double b_d = 1.0 / std::sqrt(double(cfg.d));

    EncoderParameters p;
    p.cfg = cfg;
    p.vocab_size = vocab_size;
    p.label_count = label_count;
    p.embed = uniform_init({vocab_size, cfg.d_emb}, b_emb, rng);
    p.wxf = uniform_init({cfg.d_emb, hd}, b_emb, rng);
    p.whf = uniform_init({hd, hd}, b_h, rng);
    p.bf = uniform_init({hd}, b_h, rng);
    p.wxb = uniform_init({cfg.d_emb, hd}, b_emb, rng);
    p.whb = uniform_init({hd, hd}, b_h, rng);
    p.bb = uniform_init({hd}, b_h, rng);
    p.w1 = uniform_init({cfg.d, cfg.d}, b_d, rng);
    p.b1 = uniform_init({cfg.d}, b_d, rng);
    p.w2 = uniform_init({cfg.d, label_count}, b_d, rng);
    p.b2 = uniform_init({label_count}, b_d, rng);
    return p;
}

std::vector<Tensor> encode(const EncoderParameters& p, const corpus::Vocab& vocab,
                           const corpus::TokenSequence& sentence,
                           std::mt19937_64* dropout_rng) {
    std::size_t n = sentence.size();
    std::vector<int> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = vocab.id_or_unk(sentence.tokens[i]);

    Tensor emb = num::embedding_lookup(p.embed, ids);
    std::vector<Tensor> x;
    x.reserve(n);
    for (std::size_t i = 0; i < n; ++i) x.push_back(num::row(emb, i));

    if (dropout_rng != nullptr && p.cfg.dropout > 0.0) {
        std::bernoulli_distribution keep(1.0 - p.cfg.dropout);
        double inv = 1.0 / (1.0 - p.cfg.dropout);
        for (auto& xi : x) {
            std::vector<double> mask(xi.numel());
            for (auto& m : mask) m = keep(*dropout_rng) ? inv : 0.0;
            xi = num::mul(xi, Tensor::vector(std::move(mask)));
        }
    }

    std::size_t hd = p.cfg.d / 2;
    std::vector<Tensor> fwd(n), bwd(n);
    Tensor hprev = Tensor::zeros({hd});
    for (std::size_t i = 0; i < n; ++i) {
        Tensor z = num::add(num::add(num::matmul(x[i], p.wxf), num::matmul(hprev, p.whf)),
                            p.bf);
        fwd[i] = num::tanh_t(z);
        hprev = fwd[i];
    }
    hprev = Tensor::zeros({hd});
    for (std::size_t i = n; i-- > 0;) {
        Tensor z = num::add(num::add(num::matmul(x[i], p.wxb), num::matmul(hprev, p.whb)),
                            p.bb);
        bwd[i] = num::tanh_t(z);
        hprev = bwd[i];
    }

    std::vector<Tensor> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(num::concat({fwd[i], bwd[i]}));
    return out;
}

num::Tensor vanilla_logits(const EncoderParameters& p, const Tensor& h) {
    if (h.rank() != 1 || h.shape()[0] != p.cfg.d) {
        throw DimensionError("vanilla_logits: representation width must be " +
                             std::to_string(p.cfg.d));
    }
    Tensor hidden = num::tanh_t(num::add(num::matmul(h, p.w1), p.b1));
    return num::add(num::matmul(hidden, p.w2), p.b2);
}

num::Tensor vanilla_predict(const EncoderParameters& p, const Tensor& h) {
    return num::softmax(vanilla_logits(p, h));
}

void sgd_step(const std::vector<Tensor>& params, double lr, double clip_norm) {
    double sq = 0.0;
    for (const auto& t : params) {
        for (double g : t.grad()) sq += g * g;
    }
    double scale = 1.0;
    double norm = std::sqrt(sq);
    if (clip_norm > 0.0 && norm > clip_norm) scale = clip_norm / norm;
    for (auto t : params) {
        auto& vals = t.mutable_value();
        const auto& g = t.grad();
        for (std::size_t i = 0; i < vals.size(); ++i) vals[i] -= lr * scale * g[i];
        t.zero_grad();
    }
}

double token_accuracy(const EncoderParameters& p, const corpus::Vocab& vocab,
                      const corpus::Dataset& data) {
    num::NoGrad ng;
    std::size_t correct = 0, total = 0;
    for (const auto& sent : data.sentences) {
        auto hs = encode(p, vocab, sent);
        for (std::size_t i = 0; i < sent.size(); ++i) {
            Tensor pt = vanilla_predict(p, hs[i]);
            const auto& probs = pt.value();
            std::size_t best =
                std::size_t(std::max_element(probs.begin(), probs.end()) - probs.begin());
            if (int(best) == sent.labels[i]) ++correct;
            ++total;
        }
    }
    return total == 0 ? 0.0 : double(correct) / double(total);
}

EncoderParameters train_vanilla(const corpus::Dataset& train, const corpus::Dataset* dev,
                                const corpus::Vocab& vocab, const corpus::LabelSet& labels,
                                const EncoderConfig& cfg, TrainLog* log) {
    if (train.sentences.empty()) throw ArgumentError("train_vanilla: empty dataset");
    EncoderParameters p = init_encoder(cfg, vocab.size(), labels.size());
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    auto params = p.trainable();

    std::vector<std::size_t> order(train.sentences.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total_loss = 0.0;
        std::size_t total_tokens = 0;
        for (std::size_t idx : order) {
            const auto& sent = train.sentences[idx];
            auto hs = encode(p, vocab, sent, cfg.dropout > 0.0 ? &rng : nullptr);
            std::vector<Tensor> nlls;
            nlls.reserve(sent.size());
            for (std::size_t i = 0; i < sent.size(); ++i) {
                Tensor probs = vanilla_predict(p, hs[i]);
                nlls.push_back(
                    num::scale(num::log_t(num::pick(probs, std::size_t(sent.labels[i]))),
                               -1.0));
            }
            Tensor loss = num::mean(num::concat(nlls));
            total_loss += loss.item() * double(sent.size());
            total_tokens += sent.size();
            num::backward(loss);
            sgd_step(params, cfg.lr, cfg.clip_norm);
        }
        double avg = total_loss / double(total_tokens);
        double dev_acc = dev != nullptr ? token_accuracy(p, vocab, *dev) : 0.0;
        if (log != nullptr) {
            log->epoch_loss.push_back(avg);
            if (dev != nullptr) log->dev_accuracy.push_back(dev_acc);
        }
        std::clog << "[train-vanilla] epoch " << epoch + 1 << "/" << cfg.epochs
                  << " loss " << avg;
        if (dev != nullptr) std::clog << " dev_acc " << dev_acc;
        std::clog << "\n";
    }
    return p;
}

ckpt::Container to_container(const EncoderParameters& p) {
    ckpt::Container c;
    c.magic = "GSLE";
    c.config = {{"d", std::to_string(p.cfg.d)},
                {"d_emb", std::to_string(p.cfg.d_emb)},
                {"lr", std::to_string(p.cfg.lr)},
                {"epochs", std::to_string(p.cfg.epochs)},
                {"seed", std::to_string(p.cfg.seed)},
                {"dropout", std::to_string(p.cfg.dropout)},
                {"clip_norm", std::to_string(p.cfg.clip_norm)},
                {"vocab_size", std::to_string(p.vocab_size)},
                {"label_count", std::to_string(p.label_count)}};
    for (auto& [name, t] : p.named()) c.tensors.emplace_back(name, t);
    return c;
}

EncoderParameters from_container(const ckpt::Container& c) {
    EncoderParameters p;
    auto get = [&](const char* key) {
        auto it = c.config.find(key);
        if (it == c.config.end()) throw FormatError(std::string("checkpoint: missing ") + key);
        return it->second;
    };
    p.cfg.d = std::stoul(get("d"));
    p.cfg.d_emb = std::stoul(get("d_emb"));
    p.cfg.lr = std::stod(get("lr"));
    p.cfg.epochs = std::stoul(get("epochs"));
    p.cfg.seed = std::stoull(get("seed"));
    p.cfg.dropout = std::stod(get("dropout"));
    p.cfg.clip_norm = std::stod(get("clip_norm"));
    p.vocab_size = std::stoul(get("vocab_size"));
    p.label_count = std::stoul(get("label_count"));

    std::map<std::string, Tensor> by_name;
    for (const auto& [name, t] : c.tensors) by_name.emplace(name, t);
    auto take = [&](const char* name) {
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw FormatError(std::string("checkpoint: missing tensor ") + name);
        return Tensor(it->second.shape(), it->second.value(), true);
    };
    p.embed = take("embed");
    p.wxf = take("wxf");
    p.whf = take("whf");
    p.bf = take("bf");
    p.wxb = take("wxb");
    p.whb = take("whb");
    p.bb = take("bb");
    p.w1 = take("w1");
    p.b1 = take("b1");
    p.w2 = take("w2");
    p.b2 = take("b2");
    return p;
}

void save_checkpoint(const std::string& path, const EncoderParameters& p) {
    ckpt::save(path, to_container(p));
}

EncoderParameters load_checkpoint(const std::string& path) {
    return from_container(ckpt::load(path, "GSLE"));
}

Digest checkpoint_digest(const EncoderParameters& p) {
    return ckpt::digest(to_container(p));
}

}  // namespace gnnsl::enc
