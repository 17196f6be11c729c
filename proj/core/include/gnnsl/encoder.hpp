#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gnnsl/checkpoint.hpp"
#include "gnnsl/corpus.hpp"
#include "gnnsl/numcore.hpp"
#include "gnnsl/sha256.hpp"

namespace gnnsl::enc {

struct EncoderConfig {
    std::size_t d = 64;      // token representation width (bi-RNN output)
    std::size_t d_emb = 32;  // embedding width
    double lr = 0.1;
    std::size_t epochs = 20;
    std::uint64_t seed = 0;
    double dropout = 0.0;  // embedding dropout, training only
    double clip_norm = 5.0;
};

/// Embedding table + bidirectional tanh-RNN + two-layer MLP softmax head.
/// The RNN output h (width d, pre-MLP) doubles as the datastore key.
struct EncoderParameters {
    EncoderConfig cfg;
    std::size_t vocab_size = 0;
    std::size_t label_count = 0;

    num::Tensor embed;             // |V| x d_emb
    num::Tensor wxf, whf, bf;      // forward RNN
    num::Tensor wxb, whb, bb;      // backward RNN
    num::Tensor w1, b1, w2, b2;    // MLP head d -> d -> |Y|

    std::vector<std::pair<std::string, num::Tensor>> named() const;
    std::vector<num::Tensor> trainable() const;
};

EncoderParameters init_encoder(const EncoderConfig& cfg, std::size_t vocab_size,
                               std::size_t label_count);

/// One representation h per token, width d. When `dropout_rng` is set,
/// embedding dropout at cfg.dropout is applied (inverted scaling).
std::vector<num::Tensor> encode(const EncoderParameters& p, const corpus::Vocab& vocab,
                                const corpus::TokenSequence& sentence,
                                std::mt19937_64* dropout_rng = nullptr);

num::Tensor vanilla_logits(const EncoderParameters& p, const num::Tensor& h);
/// softmax(MLP(h)) over the label set.
num::Tensor vanilla_predict(const EncoderParameters& p, const num::Tensor& h);

struct TrainLog {
    std::vector<double> epoch_loss;
    std::vector<double> dev_accuracy;  // empty when no dev split given
};

EncoderParameters train_vanilla(const corpus::Dataset& train, const corpus::Dataset* dev,
                                const corpus::Vocab& vocab, const corpus::LabelSet& labels,
                                const EncoderConfig& cfg, TrainLog* log = nullptr);

double token_accuracy(const EncoderParameters& p, const corpus::Vocab& vocab,
                      const corpus::Dataset& data);

ckpt::Container to_container(const EncoderParameters& p);
EncoderParameters from_container(const ckpt::Container& c);
void save_checkpoint(const std::string& path, const EncoderParameters& p);
EncoderParameters load_checkpoint(const std::string& path);
Digest checkpoint_digest(const EncoderParameters& p);

/// Global-norm gradient clipping followed by an SGD step; zeroes grads.
void sgd_step(const std::vector<num::Tensor>& params, double lr, double clip_norm);

}  // namespace gnnsl::enc
