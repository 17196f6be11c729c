#include "gnnsl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

#include "gnnsl/io.hpp"
#include "gnnsl/sha256.hpp"

namespace gnnsl::harness {

namespace fs = std::filesystem;

std::string setup_name(Setup s) {
    switch (s) {
        case Setup::Vanilla: return "vanilla";
        case Setup::VanillaKnn: return "vanilla+knn";
        case Setup::VanillaGnn: return "vanilla+gnn";
        case Setup::VanillaGnnKnn: return "vanilla+gnn+knn";
    }
    return "?";
}

Setup setup_from_string(const std::string& s) {
    if (s == "vanilla") return Setup::Vanilla;
    if (s == "vanilla+knn") return Setup::VanillaKnn;
    if (s == "vanilla+gnn") return Setup::VanillaGnn;
    if (s == "vanilla+gnn+knn") return Setup::VanillaGnnKnn;
    throw ArgumentError("unknown setup: " + s);
}

void ExperimentPlan::validate() const {
    if (seeds.empty()) throw ArgumentError("plan: at least one seed required");
    for (std::size_t k : k_sweep) {
        if (k == 0) throw ArgumentError("plan: k sweep values must be positive");
    }
}

namespace {

const double kLambdaGrid[] = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
const double kTemperatureGrid[] = {1.0, 10.0, 100.0};

std::string short_hex(const Digest& d) { return digest_hex(d).substr(0, 12); }

std::string bundle_digest(const DataBundle& data) {
    Sha256 h;
    for (const corpus::Dataset* split : {&data.train, &data.dev, &data.test}) {
        std::string s = corpus::serialize(*split, data.labels);
        h.update(s.data(), s.size());
        h.update("\x1f", 1);
    }
    auto d = h.finish();
    return short_hex(d);
}

std::string encoder_cfg_string(const enc::EncoderConfig& cfg) {
    std::ostringstream s;
    s << "d=" << cfg.d << ";d_emb=" << cfg.d_emb << ";lr=" << cfg.lr
      << ";epochs=" << cfg.epochs << ";seed=" << cfg.seed << ";dropout=" << cfg.dropout
      << ";clip=" << cfg.clip_norm;
    return s.str();
}

std::string gnn_cfg_string(const gnn::GnnConfig& cfg, const graph::WindowConfig& wcfg) {
    std::ostringstream s;
    s << "L=" << cfg.layers << ";g=" << cfg.heads << ";d=" << cfg.d << ";k=" << cfg.k
      << ";seed=" << cfg.seed << ";lr=" << cfg.lr << ";epochs=" << cfg.epochs
      << ";clip=" << cfg.clip_norm << ";c=" << wcfg.context_radius
      << ";labels=" << (wcfg.include_labels ? 1 : 0);
    return s.str();
}

/// Per-token evidence reused across the (lambda, T) tuning grid.
struct TokenEvidence {
    std::vector<double> p_base;                     // vanilla or GNN distribution
    std::vector<std::pair<int, double>> neighbors;  // (label, unsquared distance)
    int gold = 0;
};

std::vector<std::vector<TokenEvidence>> vanilla_evidence(
    const enc::EncoderParameters& encoder, const corpus::Vocab& vocab,
    const ds::Datastore& store, const corpus::Dataset& data, std::size_t k) {
    num::NoGrad ng;
    std::vector<std::vector<TokenEvidence>> out;
    out.reserve(data.sentences.size());
    for (const auto& sent : data.sentences) {
        auto hs = enc::encode(encoder, vocab, sent);
        std::vector<TokenEvidence> row;
        row.reserve(sent.size());
        for (std::size_t i = 0; i < sent.size(); ++i) {
            TokenEvidence ev;
            ev.p_base = enc::vanilla_predict(encoder, hs[i]).value();
            for (const auto& nb : ds::knn_query(store, hs[i].value(), k)) {
                ev.neighbors.emplace_back(int(store.record(nb.record_index).label_id),
                                          std::sqrt(nb.dist2));
            }
            ev.gold = sent.labels[i];
            row.push_back(std::move(ev));
        }
        out.push_back(std::move(row));
    }
    return out;
}

std::vector<std::vector<TokenEvidence>> gnn_evidence(
    const enc::EncoderParameters& encoder, const corpus::Vocab& vocab,
    const ds::Datastore& store, const gnn::GnnParameters& params,
    const graph::WindowConfig& wcfg, const corpus::Dataset& data) {
    num::NoGrad ng;
    std::vector<std::vector<TokenEvidence>> out;
    out.reserve(data.sentences.size());
    for (const auto& sent : data.sentences) {
        auto hs = enc::encode(encoder, vocab, sent);
        std::vector<std::vector<double>> reps;
        std::vector<ds::NeighborSet> neighbors;
        for (std::size_t i = 0; i < sent.size(); ++i) {
            reps.push_back(hs[i].value());
            neighbors.push_back(ds::knn_query(store, reps.back(), params.cfg.k));
        }
        auto g = graph::construct(reps, neighbors, store, wcfg);
        auto probs = gnn::gnn_predict(params, g);
        std::vector<TokenEvidence> row;
        for (std::size_t i = 0; i < sent.size(); ++i) {
            TokenEvidence ev;
            ev.p_base = probs[i];
            for (const auto& nb : neighbors[i]) {
                ev.neighbors.emplace_back(int(store.record(nb.record_index).label_id),
                                          std::sqrt(nb.dist2));
            }
            ev.gold = sent.labels[i];
            row.push_back(std::move(ev));
        }
        out.push_back(std::move(row));
    }
    return out;
}

std::vector<std::vector<int>> decode_evidence(
    const std::vector<std::vector<TokenEvidence>>& evidence, std::size_t k, double lambda,
    double temperature, std::size_t label_count) {
    std::vector<std::vector<int>> pred;
    pred.reserve(evidence.size());
    for (const auto& row : evidence) {
        std::vector<int> labels;
        labels.reserve(row.size());
        for (const auto& ev : row) {
            std::vector<std::pair<int, double>> nbs(
                ev.neighbors.begin(),
                ev.neighbors.begin() + long(std::min(k, ev.neighbors.size())));
            auto p_knn = knn::knn_distribution_raw(nbs, temperature, label_count);
            auto p = knn::interpolate(ev.p_base, p_knn, lambda);
            labels.push_back(knn::argmax_label(p));
        }
        pred.push_back(std::move(labels));
    }
    return pred;
}

struct Tuned {
    double lambda = 0.5;
    double temperature = 1.0;
    double dev_f1 = 0.0;
};

Tuned tune_interp(const std::vector<std::vector<TokenEvidence>>& dev_evidence,
                  std::size_t k, const DataBundle& data) {
    Tuned best;
    bool first = true;
    for (double lambda : kLambdaGrid) {
        for (double temperature : kTemperatureGrid) {
            auto pred =
                decode_evidence(dev_evidence, k, lambda, temperature, data.labels.size());
            auto rep = eval::evaluate(pred, data.dev, data.labels, &data.train);
            if (first || rep.f1 > best.dev_f1) {
                best = {lambda, temperature, rep.f1};
                first = false;
            }
        }
    }
    return best;
}

std::vector<std::vector<int>> predict_vanilla(const enc::EncoderParameters& encoder,
                                              const corpus::Vocab& vocab,
                                              const corpus::Dataset& data) {
    num::NoGrad ng;
    std::vector<std::vector<int>> pred;
    pred.reserve(data.sentences.size());
    for (const auto& sent : data.sentences) {
        auto hs = enc::encode(encoder, vocab, sent);
        std::vector<int> labels;
        for (std::size_t i = 0; i < sent.size(); ++i) {
            labels.push_back(knn::argmax_label(enc::vanilla_predict(encoder, hs[i]).value()));
        }
        pred.push_back(std::move(labels));
    }
    return pred;
}

void fill_metrics(ResultRow& row, const eval::EvalReport& rep) {
    row.precision = rep.precision;
    row.recall = rep.recall;
    row.f1 = rep.f1;
    row.long_tail_f1 = rep.long_tail_f1;
    row.token_accuracy = rep.token_accuracy;
}

/// Stage cache: trains (or loads) per-seed artifacts under the cache dir.
class SeedStages {
public:
    SeedStages(const ExperimentPlan& plan, const DataBundle& data,
               const corpus::Vocab& vocab, std::uint64_t seed, std::string cache_dir,
               StageCounters* counters)
        : plan_(plan),
          data_(data),
          vocab_(vocab),
          seed_(seed),
          cache_dir_(std::move(cache_dir)),
          counters_(counters),
          data_digest_(bundle_digest(data)) {}

    const enc::EncoderParameters& encoder(bool trained) {
        auto& slot = trained ? encoder_ : raw_encoder_;
        if (slot) return *slot;
        enc::EncoderConfig cfg = plan_.encoder_cfg;
        cfg.seed = seed_;
        std::string key = short_hex(Sha256::of(encoder_cfg_string(cfg) + ";data=" +
                                               data_digest_ +
                                               (trained ? "" : ";untrained")));
        std::string path = cache_dir_ + "/enc_" + key + ".gsle";
        if (fs::exists(path)) {
            slot = enc::load_checkpoint(path);
            return *slot;
        }
        if (trained) {
            if (counters_ != nullptr) ++counters_->encoder_trainings;
            slot = enc::train_vanilla(data_.train, &data_.dev, vocab_, data_.labels, cfg);
        } else {
            slot = enc::init_encoder(cfg, vocab_.size(), data_.labels.size());
        }
        enc::save_checkpoint(path, *slot);
        // Reload so the cached and fresh paths hand out identical parameters.
        slot = enc::load_checkpoint(path);
        return *slot;
    }

    const ds::Datastore& store(bool trained_keys) {
        auto& slot = trained_keys ? store_ : raw_store_;
        if (slot) return *slot;
        const auto& encoder = this->encoder(trained_keys);
        std::string key = short_hex(enc::checkpoint_digest(encoder));
        std::string path = cache_dir_ + "/store_" + key + ".gsld";
        if (fs::exists(path)) {
            slot = ds::load(path);
            return *slot;
        }
        if (counters_ != nullptr) ++counters_->store_builds;
        slot = ds::build(encoder, vocab_, data_.train, data_.labels);
        ds::save(*slot, path);
        return *slot;
    }

    gnn::GnnParameters gnn_model(const graph::WindowConfig& wcfg, bool trained_keys) {
        gnn::GnnConfig cfg = plan_.gnn_cfg;
        cfg.seed = seed_;
        cfg.d = plan_.encoder_cfg.d;
        const auto& st = store(trained_keys);
        std::string key = short_hex(
            Sha256::of(gnn_cfg_string(cfg, wcfg) + ";store=" +
                       digest_hex(st.source_digest()) + ";data=" + data_digest_));
        std::string path = cache_dir_ + "/gnn_" + key + ".gslg";
        if (fs::exists(path)) return gnn::load_checkpoint(path);
        if (counters_ != nullptr) ++counters_->gnn_trainings;
        auto params =
            gnn::train_gnn(encoder(trained_keys), vocab_, st, data_.train, wcfg, cfg);
        gnn::save_checkpoint(path, params);
        return gnn::load_checkpoint(path);
    }

    const std::string& data_digest() const { return data_digest_; }

private:
    const ExperimentPlan& plan_;
    const DataBundle& data_;
    const corpus::Vocab& vocab_;
    std::uint64_t seed_;
    std::string cache_dir_;
    StageCounters* counters_;
    std::string data_digest_;
    std::optional<enc::EncoderParameters> encoder_, raw_encoder_;
    std::optional<ds::Datastore> store_, raw_store_;
};

}  // namespace

std::string ResultTable::to_tsv() const {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(2);
    out << "setup\tseed\tk\tcontext\tlabel_nodes\tfinetuned_keys\tlambda\ttemperature"
           "\tprecision\trecall\tf1\tlong_tail_f1\ttoken_accuracy\tconfig_digest\terror\n";
    for (const auto& r : rows) {
        out << r.setup << '\t' << r.seed << '\t' << r.k << '\t' << r.context << '\t'
            << (r.label_nodes ? 1 : 0) << '\t' << (r.finetuned_keys ? 1 : 0) << '\t'
            << r.lambda << '\t' << r.temperature << '\t' << r.precision << '\t' << r.recall
            << '\t' << r.f1 << '\t' << r.long_tail_f1 << '\t' << r.token_accuracy << '\t'
            << r.config_digest << '\t' << r.error << '\n';
    }
    return out.str();
}

const ResultRow* ResultTable::find(const std::string& setup, std::uint64_t seed) const {
    for (const auto& r : rows) {
        if (r.setup == setup && r.seed == seed) return &r;
    }
    return nullptr;
}

ResultTable run_plan(const ExperimentPlan& plan, const DataBundle& data,
                     StageCounters* counters) {
    plan.validate();
    std::string cache_dir = plan.output_dir + "/cache";
    fs::create_directories(cache_dir);

    corpus::Vocab vocab = corpus::Vocab::build(data.train);
    ResultTable table;

    auto run_cell = [&](ResultRow row, const std::function<void(ResultRow&)>& body) {
        row.config_digest = short_hex(Sha256::of(
            row.setup + ";seed=" + std::to_string(row.seed) + ";k=" +
            std::to_string(row.k) + ";c=" + std::to_string(row.context) + ";data=" +
            bundle_digest(data)));
        try {
            body(row);
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        table.rows.push_back(std::move(row));
    };

    for (std::uint64_t seed : plan.seeds) {
        SeedStages stages(plan, data, vocab, seed, cache_dir, counters);
        auto wants = [&](Setup s) {
            return std::find(plan.setups.begin(), plan.setups.end(), s) !=
                   plan.setups.end();
        };

        if (wants(Setup::Vanilla)) {
            ResultRow row;
            row.setup = setup_name(Setup::Vanilla);
            row.seed = seed;
            row.lambda = 1.0;
            run_cell(row, [&](ResultRow& r) {
                auto pred = predict_vanilla(stages.encoder(true), vocab, data.test);
                fill_metrics(r, eval::evaluate(pred, data.test, data.labels, &data.train));
            });
        }

        bool need_knn = wants(Setup::VanillaKnn) || !plan.k_sweep.empty();
        if (need_knn) {
            std::size_t k_max = plan.default_k;
            for (std::size_t k : plan.k_sweep) k_max = std::max(k_max, k);
            std::vector<std::vector<TokenEvidence>> dev_ev, test_ev;
            try {
                dev_ev = vanilla_evidence(stages.encoder(true), vocab, stages.store(true),
                                          data.dev, k_max);
                test_ev = vanilla_evidence(stages.encoder(true), vocab, stages.store(true),
                                           data.test, k_max);
            } catch (const std::exception& e) {
                ResultRow row;
                row.setup = setup_name(Setup::VanillaKnn);
                row.seed = seed;
                row.error = e.what();
                table.rows.push_back(row);
                continue;
            }

            auto knn_row = [&](const std::string& name, std::size_t k, bool tune) {
                ResultRow row;
                row.setup = name;
                row.seed = seed;
                row.k = k;
                run_cell(row, [&](ResultRow& r) {
                    double lambda = 0.5;
                    double temperature = 10.0;
                    if (tune) {
                        Tuned t = tune_interp(dev_ev, k, data);
                        lambda = t.lambda;
                        temperature = t.temperature;
                    }
                    r.lambda = lambda;
                    r.temperature = temperature;
                    auto pred = decode_evidence(test_ev, k, lambda, temperature,
                                                data.labels.size());
                    fill_metrics(r,
                                 eval::evaluate(pred, data.test, data.labels, &data.train));
                });
            };

            if (wants(Setup::VanillaKnn)) {
                knn_row(setup_name(Setup::VanillaKnn), plan.default_k, /*tune=*/true);
            }
            if (!plan.k_sweep.empty()) {
                // Sweep rows hold lambda and the temperature fixed so that the
                // table isolates the effect of k; only the headline
                // vanilla+knn row tunes them on the dev split.
                std::size_t best_k = plan.k_sweep.front();
                double best_f1 = -1.0;
                for (std::size_t k : plan.k_sweep) {
                    knn_row("vanilla+knn[k=" + std::to_string(k) + "]", k,
                            /*tune=*/false);
                    const auto& r = table.rows.back();
                    if (r.error.empty() && r.f1 > best_f1) {
                        best_f1 = r.f1;
                        best_k = k;
                    }
                }
                knn_row("vanilla+knn[best-k=" + std::to_string(best_k) + "]", best_k,
                        /*tune=*/false);
            }
        }

        auto gnn_rows = [&](const std::string& name, const graph::WindowConfig& wcfg,
                            bool trained_keys, bool with_knn) {
            ResultRow row;
            row.setup = name;
            row.seed = seed;
            row.k = plan.gnn_cfg.k;
            row.context = wcfg.context_radius;
            row.label_nodes = wcfg.include_labels;
            row.finetuned_keys = trained_keys;
            row.lambda = 1.0;
            run_cell(row, [&](ResultRow& r) {
                auto params = stages.gnn_model(wcfg, trained_keys);
                auto test_ev = gnn_evidence(stages.encoder(trained_keys), vocab,
                                            stages.store(trained_keys), params, wcfg,
                                            data.test);
                if (with_knn) {
                    auto dev_ev = gnn_evidence(stages.encoder(trained_keys), vocab,
                                               stages.store(trained_keys), params, wcfg,
                                               data.dev);
                    Tuned t = tune_interp(dev_ev, params.cfg.k, data);
                    r.lambda = t.lambda;
                    r.temperature = t.temperature;
                    auto pred = decode_evidence(test_ev, params.cfg.k, t.lambda,
                                                t.temperature, data.labels.size());
                    fill_metrics(r,
                                 eval::evaluate(pred, data.test, data.labels, &data.train));
                } else {
                    std::vector<std::vector<int>> pred;
                    for (const auto& sent_ev : test_ev) {
                        std::vector<int> labels;
                        for (const auto& ev : sent_ev) {
                            labels.push_back(knn::argmax_label(ev.p_base));
                        }
                        pred.push_back(std::move(labels));
                    }
                    fill_metrics(r,
                                 eval::evaluate(pred, data.test, data.labels, &data.train));
                }
            });
        };

        if (wants(Setup::VanillaGnn)) {
            gnn_rows(setup_name(Setup::VanillaGnn), plan.window_cfg, true, false);
        }
        if (wants(Setup::VanillaGnnKnn)) {
            gnn_rows(setup_name(Setup::VanillaGnnKnn), plan.window_cfg, true, true);
        }
        if (plan.ablate_labels) {
            graph::WindowConfig wcfg = plan.window_cfg;
            wcfg.include_labels = false;
            gnn_rows("vanilla+gnn[no-labels]", wcfg, true, false);
        }
        for (std::size_t c : plan.context_sweep) {
            graph::WindowConfig wcfg = plan.window_cfg;
            wcfg.context_radius = c;
            gnn_rows("vanilla+gnn[c=" + std::to_string(c) + "]", wcfg, true, false);
        }
        if (plan.ablate_raw_keys) {
            // Analogue of retrieving with non-fine-tuned representations: the
            // datastore keys come from a freshly initialized encoder.
            gnn_rows("vanilla+gnn[raw-keys]", plan.window_cfg, false, false);
        }
    }

    std::string plan_digest = table.rows.empty()
                                  ? "empty"
                                  : table.rows.front().config_digest;
    io::write_file_atomic(plan.output_dir + "/results_" + plan_digest + ".tsv",
                          table.to_tsv());
    std::ostringstream summary;
    summary << "rows=" << table.rows.size() << "\n";
    for (const auto& r : table.rows) {
        summary << r.setup << " seed=" << r.seed << " f1=" << r.f1
                << " long_tail_f1=" << r.long_tail_f1
                << (r.error.empty() ? "" : " ERROR=" + r.error) << "\n";
    }
    io::write_file_atomic(plan.output_dir + "/summary_" + plan_digest + ".txt",
                          summary.str());
    return table;
}

}  // namespace gnnsl::harness
