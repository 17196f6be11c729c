// Command-line front end: gen-data, train-vanilla, build-datastore,
// train-gnn, tag, evaluate, ablate. Logs go to stderr, data to stdout or
// --out files. Exit codes: 0 ok, 1 usage, 2 data/format error.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <thread>

#include "gnnsl/checkpoint.hpp"
#include "gnnsl/corpus.hpp"
#include "gnnsl/datastore.hpp"
#include "gnnsl/encoder.hpp"
#include "gnnsl/eval.hpp"
#include "gnnsl/gnn.hpp"
#include "gnnsl/harness.hpp"
#include "gnnsl/io.hpp"
#include "gnnsl/knnsl.hpp"

namespace {

using namespace gnnsl;

constexpr char kSep = '\x1f';
constexpr std::size_t kConfigChunk = 60000;

std::string join(const std::vector<std::string>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += kSep;
        out += xs[i];
    }
    return out;
}

std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        std::size_t next = s.find(kSep, pos);
        out.push_back(s.substr(pos, next - pos));
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    return out;
}

/// Model file = encoder checkpoint plus the vocab and label inventory it was
/// trained with, so tagging needs no access to the training corpus.
struct ModelBundle {
    enc::EncoderParameters params;
    corpus::Vocab vocab;
    corpus::LabelSet labels;
};

void save_model(const std::string& path, const ModelBundle& m) {
    ckpt::Container c = enc::to_container(m.params);
    c.config["labels"] = join(m.labels.names);
    c.config["scheme"] = corpus::scheme_to_string(m.labels.scheme);
    // The vocab can exceed one config entry's u16 length; chunk it.
    std::string vocab = join(m.vocab.tokens());
    std::size_t n_chunks = (vocab.size() + kConfigChunk - 1) / kConfigChunk;
    c.config["vocab_chunks"] = std::to_string(n_chunks);
    for (std::size_t i = 0; i < n_chunks; ++i) {
        c.config["vocab." + std::to_string(i)] =
            vocab.substr(i * kConfigChunk, kConfigChunk);
    }
    ckpt::save(path, c);
}

ModelBundle load_model(const std::string& path) {
    ckpt::Container c = ckpt::load(path, "GSLE");
    auto get = [&](const std::string& key) {
        auto it = c.config.find(key);
        if (it == c.config.end()) throw FormatError("model: missing " + key);
        return it->second;
    };
    ModelBundle m{enc::from_container(c), corpus::Vocab{}, corpus::LabelSet{}};
    m.labels.names = split(get("labels"));
    m.labels.scheme = corpus::scheme_from_string(get("scheme"));
    std::string vocab;
    std::size_t n_chunks = std::stoul(get("vocab_chunks"));
    for (std::size_t i = 0; i < n_chunks; ++i) vocab += get("vocab." + std::to_string(i));
    m.vocab = corpus::Vocab::from_tokens(split(vocab));
    return m;
}

corpus::ParseResult parse_file(const std::string& path, const std::string& scheme) {
    return corpus::parse_conll(io::read_file(path), corpus::scheme_from_string(scheme));
}

void write_or_print(const std::string& out_path, const std::string& data) {
    if (out_path.empty()) {
        std::cout << data;
    } else {
        io::write_file(out_path, data);
    }
}

std::string tagged_conll(const corpus::Dataset& data, const corpus::LabelSet& labels,
                         const std::vector<std::vector<int>>& pred) {
    corpus::Dataset out = data;
    for (std::size_t s = 0; s < out.sentences.size(); ++s) {
        out.sentences[s].labels = pred[s];
    }
    return corpus::serialize(out, labels);
}

void add_config_option(CLI::App* cmd) {
    // Config files are expanded into --key=value tokens before parsing (see
    // expand_config_args); the option itself only has to be recognized here.
    static std::string sink;  // parsed value is unused; the file is pre-expanded
    cmd->add_option("--config", sink, "Flat key=value config file; flags win");
}

/// Replaces "--config FILE" (or --config=FILE) with the file's key=value
/// lines as --key=value tokens. Keys also given on the command line are
/// skipped, so explicit flags win. Unknown keys fail parsing later.
std::vector<std::string> expand_config_args(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::size_t cfg_at = args.size();
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            cfg_at = i;
            path = args[i + 1];
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            cfg_at = i;
            path = args[i].substr(9);
            break;
        }
    }
    if (cfg_at == args.size()) return args;

    auto given = [&](const std::string& key) {
        std::string flag = "--" + key;
        for (const auto& a : args) {
            if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
        }
        return false;
    };

    std::vector<std::string> inject;
    std::string text = io::read_file(path);
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string line = text.substr(pos, eol == std::string::npos ? eol : eol - pos);
        pos = eol == std::string::npos ? text.size() + 1 : eol + 1;
        ++line_no;
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        while (!line.empty() && line.front() == ' ') line.erase(line.begin());
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ArgumentError("config " + path + ":" + std::to_string(line_no) +
                                ": expected key=value, got \"" + line + "\"");
        }
        std::string key = line.substr(0, eq);
        if (given(key)) continue;
        inject.push_back("--" + line);
    }
    args.insert(args.begin() + long(cfg_at), inject.begin(), inject.end());
    return args;
}

int cmd_gen_data(const std::string& prefix, std::uint64_t seed, std::size_t n,
                 double fraction) {
    auto corpus = corpus::generate_synthetic(seed, n, fraction);
    io::write_file(prefix + ".train.conll", corpus::serialize(corpus.train, corpus.labels));
    io::write_file(prefix + ".dev.conll", corpus::serialize(corpus.dev, corpus.labels));
    io::write_file(prefix + ".test.conll", corpus::serialize(corpus.test, corpus.labels));
    std::clog << "[gen-data] train=" << corpus.train.sentences.size()
              << " dev=" << corpus.dev.sentences.size()
              << " test=" << corpus.test.sentences.size() << " sentences -> " << prefix
              << ".{train,dev,test}.conll\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Retrieval-augmented sequence labeling (kNN-SL / GNN-SL)"};
    app.require_subcommand(1);

    // gen-data ------------------------------------------------------------
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus");
    std::string gen_prefix = "synthetic";
    std::uint64_t gen_seed = 1;
    std::size_t gen_n = 1000;
    double gen_fraction = 0.2;
    gen->add_option("--out-prefix", gen_prefix, "Output path prefix");
    gen->add_option("--seed", gen_seed, "RNG seed");
    gen->add_option("--n", gen_n, "Total sentence count");
    gen->add_option("--fraction", gen_fraction, "Long-tail fraction in [0, 0.5]");
    add_config_option(gen);

    // train-vanilla -------------------------------------------------------
    auto* tv = app.add_subcommand("train-vanilla", "Train the vanilla SL model");
    std::string tv_train, tv_dev, tv_out = "model.gsle", tv_scheme = "bio";
    enc::EncoderConfig tv_cfg;
    tv->add_option("--train", tv_train, "Training CoNLL file")->required();
    tv->add_option("--dev", tv_dev, "Dev CoNLL file (for accuracy logging)");
    tv->add_option("--out", tv_out, "Output model path");
    tv->add_option("--scheme", tv_scheme, "Label scheme: bio, bmes, plain");
    tv->add_option("--d", tv_cfg.d, "Representation width");
    tv->add_option("--d-emb", tv_cfg.d_emb, "Embedding width");
    tv->add_option("--lr", tv_cfg.lr, "Learning rate");
    tv->add_option("--epochs", tv_cfg.epochs, "Training epochs");
    tv->add_option("--seed", tv_cfg.seed, "RNG seed");
    tv->add_option("--dropout", tv_cfg.dropout, "Embedding dropout");
    add_config_option(tv);

    // build-datastore -----------------------------------------------------
    auto* bd = app.add_subcommand("build-datastore", "Cache training-token records");
    std::string bd_model, bd_train, bd_out = "store.gsld";
    bd->add_option("--model", bd_model, "Trained model file")->required();
    bd->add_option("--train", bd_train, "Training CoNLL file")->required();
    bd->add_option("--out", bd_out, "Output datastore path");
    add_config_option(bd);

    // train-gnn -----------------------------------------------------------
    auto* tg = app.add_subcommand("train-gnn", "Train the message-passing model");
    std::string tg_model, tg_store, tg_train, tg_out = "gnn.gslg";
    gnn::GnnConfig tg_cfg;
    graph::WindowConfig tg_wcfg;
    bool tg_no_labels = false;
    tg->add_option("--model", tg_model, "Trained model file")->required();
    tg->add_option("--datastore", tg_store, "Datastore file")->required();
    tg->add_option("--train", tg_train, "Training CoNLL file")->required();
    tg->add_option("--out", tg_out, "Output GNN checkpoint path");
    tg->add_option("--k", tg_cfg.k, "Neighbors per token");
    tg->add_option("--layers", tg_cfg.layers, "GNN layers");
    tg->add_option("--heads", tg_cfg.heads, "Attention heads");
    tg->add_option("--lr", tg_cfg.lr, "Learning rate");
    tg->add_option("--epochs", tg_cfg.epochs, "Training epochs");
    tg->add_option("--seed", tg_cfg.seed, "RNG seed");
    tg->add_option("--context", tg_wcfg.context_radius, "One-sided context radius");
    tg->add_flag("--no-label-nodes", tg_no_labels, "Drop label nodes from graphs");
    add_config_option(tg);

    // tag -----------------------------------------------------------------
    auto* tag = app.add_subcommand("tag", "Tag a CoNLL file");
    std::string tag_model, tag_store, tag_gnn, tag_input, tag_out, tag_mode = "vanilla";
    knn::InterpConfig tag_interp;
    graph::WindowConfig tag_wcfg;
    bool tag_no_labels = false;
    std::size_t tag_threads = 1;
    tag->add_option("--model", tag_model, "Trained model file")->required();
    tag->add_option("--input", tag_input, "Input CoNLL file")->required();
    tag->add_option("--mode", tag_mode, "vanilla, knn, gnn, gnn+knn")
        ->check(CLI::IsMember({"vanilla", "knn", "gnn", "gnn+knn"}));
    tag->add_option("--datastore", tag_store, "Datastore (knn/gnn modes)");
    tag->add_option("--gnn", tag_gnn, "GNN checkpoint (gnn modes)");
    tag->add_option("--out", tag_out, "Output file (default stdout)");
    tag->add_option("--k", tag_interp.k, "Neighbors per token");
    tag->add_option("--lambda", tag_interp.lambda, "Interpolation weight");
    tag->add_option("--temperature", tag_interp.temperature, "kNN temperature");
    tag->add_option("--context", tag_wcfg.context_radius, "Context radius (gnn modes)");
    tag->add_flag("--no-label-nodes", tag_no_labels, "Drop label nodes (gnn modes)");
    tag->add_option("--threads", tag_threads, "Sentence-level parallelism");
    add_config_option(tag);

    // evaluate ------------------------------------------------------------
    auto* ev = app.add_subcommand("evaluate", "Span P/R/F1 of a tagged file");
    std::string ev_pred, ev_gold, ev_train, ev_out, ev_scheme = "bio";
    ev->add_option("--pred", ev_pred, "Predicted CoNLL file")->required();
    ev->add_option("--gold", ev_gold, "Gold CoNLL file")->required();
    ev->add_option("--train", ev_train, "Training CoNLL file (enables long-tail F1)");
    ev->add_option("--scheme", ev_scheme, "Label scheme");
    ev->add_option("--out", ev_out, "Write the report here instead of stdout");
    add_config_option(ev);

    // ablate --------------------------------------------------------------
    auto* ab = app.add_subcommand("ablate", "Run control setups and ablations");
    harness::ExperimentPlan plan;
    std::string ab_train, ab_dev, ab_test, ab_scheme = "bio";
    std::vector<std::string> ab_setups = {"vanilla", "vanilla+knn", "vanilla+gnn",
                                          "vanilla+gnn+knn"};
    ab->add_option("--train", ab_train, "Training CoNLL file")->required();
    ab->add_option("--dev", ab_dev, "Dev CoNLL file")->required();
    ab->add_option("--test", ab_test, "Test CoNLL file")->required();
    ab->add_option("--scheme", ab_scheme, "Label scheme");
    ab->add_option("--setups", ab_setups, "Setups to run")->delimiter(',');
    ab->add_option("--seeds", plan.seeds, "Seeds")->delimiter(',');
    ab->add_option("--k-sweep", plan.k_sweep, "Extra kNN rows per k")->delimiter(',');
    ab->add_option("--context-sweep", plan.context_sweep, "Extra GNN rows per radius")
        ->delimiter(',');
    ab->add_flag("--ablate-labels", plan.ablate_labels, "Add a no-label-nodes arm");
    ab->add_flag("--ablate-raw-keys", plan.ablate_raw_keys,
                 "Add an untrained-encoder-keys arm");
    ab->add_option("--out-dir", plan.output_dir, "Output directory");
    ab->add_option("--k", plan.default_k, "Default neighbor count");
    ab->add_option("--d", plan.encoder_cfg.d, "Representation width");
    ab->add_option("--d-emb", plan.encoder_cfg.d_emb, "Embedding width");
    ab->add_option("--encoder-epochs", plan.encoder_cfg.epochs, "Encoder epochs");
    ab->add_option("--encoder-lr", plan.encoder_cfg.lr, "Encoder learning rate");
    ab->add_option("--gnn-epochs", plan.gnn_cfg.epochs, "GNN epochs");
    ab->add_option("--gnn-lr", plan.gnn_cfg.lr, "GNN learning rate");
    ab->add_option("--gnn-k", plan.gnn_cfg.k, "Neighbors per token for graphs");
    ab->add_option("--layers", plan.gnn_cfg.layers, "GNN layers");
    ab->add_option("--heads", plan.gnn_cfg.heads, "Attention heads");
    ab->add_option("--context", plan.window_cfg.context_radius, "Context radius");
    add_config_option(ab);

    try {
        std::vector<std::string> args = expand_config_args(argc, argv);
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // 0
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const std::exception& e) {
        // A bad config file is a usage error, not a data error.
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    // Log the fully resolved configuration (defaults, file values, and flags
    // merged) for the subcommand actually run.
    for (const auto* sc : app.get_subcommands()) {
        std::istringstream resolved(sc->config_to_str(true, false));
        std::string line;
        while (std::getline(resolved, line)) {
            if (!line.empty()) std::clog << "[config] " << sc->get_name() << " " << line << "\n";
        }
    }

    try {
        if (*gen) return cmd_gen_data(gen_prefix, gen_seed, gen_n, gen_fraction);

        if (*tv) {
            auto train = parse_file(tv_train, tv_scheme);
            if (train.repaired > 0) {
                std::clog << "[train-vanilla] repaired " << train.repaired
                          << " BIO violations\n";
            }
            corpus::Vocab vocab = corpus::Vocab::build(train.data);
            corpus::Dataset dev;
            bool have_dev = !tv_dev.empty();
            if (have_dev) {
                auto parsed = corpus::parse_conll(io::read_file(tv_dev), train.labels.scheme);
                // Re-map dev labels into the training label set.
                for (auto& sent : parsed.data.sentences) {
                    for (auto& l : sent.labels) l = train.labels.id(parsed.labels.name(l));
                }
                dev = std::move(parsed.data);
            }
            auto params = enc::train_vanilla(train.data, have_dev ? &dev : nullptr, vocab,
                                             train.labels, tv_cfg);
            save_model(tv_out, {params, vocab, train.labels});
            std::clog << "[train-vanilla] wrote " << tv_out << " (digest "
                      << digest_hex(enc::checkpoint_digest(params)).substr(0, 12) << ")\n";
            return 0;
        }

        if (*bd) {
            ModelBundle m = load_model(bd_model);
            auto train = parse_file(bd_train, corpus::scheme_to_string(m.labels.scheme));
            for (auto& sent : train.data.sentences) {
                for (auto& l : sent.labels) l = m.labels.id(train.labels.name(l));
            }
            auto store = ds::build(m.params, m.vocab, train.data, m.labels);
            ds::save(store, bd_out);
            std::clog << "[build-datastore] " << store.size() << " records -> " << bd_out
                      << "\n";
            return 0;
        }

        if (*tg) {
            ModelBundle m = load_model(tg_model);
            auto store = ds::load(tg_store);
            auto train = parse_file(tg_train, corpus::scheme_to_string(m.labels.scheme));
            for (auto& sent : train.data.sentences) {
                for (auto& l : sent.labels) l = m.labels.id(train.labels.name(l));
            }
            tg_cfg.d = m.params.cfg.d;
            tg_wcfg.include_labels = !tg_no_labels;
            auto params = gnn::train_gnn(m.params, m.vocab, store, train.data, tg_wcfg,
                                         tg_cfg);
            gnn::save_checkpoint(tg_out, params);
            std::clog << "[train-gnn] wrote " << tg_out << "\n";
            return 0;
        }

        if (*tag) {
            ModelBundle m = load_model(tag_model);
            auto input = parse_file(tag_input, corpus::scheme_to_string(m.labels.scheme));
            std::optional<ds::Datastore> store;
            std::optional<gnn::GnnParameters> gnn_params;
            bool needs_store = tag_mode != "vanilla";
            bool needs_gnn = tag_mode == "gnn" || tag_mode == "gnn+knn";
            if (needs_store) {
                if (tag_store.empty()) {
                    std::cerr << "tag: --datastore is required for mode " << tag_mode
                              << "\n";
                    return 1;
                }
                store = ds::load(tag_store);
            }
            if (needs_gnn) {
                if (tag_gnn.empty()) {
                    std::cerr << "tag: --gnn is required for mode " << tag_mode << "\n";
                    return 1;
                }
                gnn_params = gnn::load_checkpoint(tag_gnn);
            }
            tag_wcfg.include_labels = !tag_no_labels;

            const auto& sentences = input.data.sentences;
            std::vector<std::vector<int>> pred(sentences.size());
            auto tag_one = [&](std::size_t s) {
                num::NoGrad ng;
                const auto& sent = sentences[s];
                std::vector<int> labels;
                if (tag_mode == "vanilla") {
                    auto hs = enc::encode(m.params, m.vocab, sent);
                    for (std::size_t i = 0; i < sent.size(); ++i) {
                        labels.push_back(knn::argmax_label(
                            enc::vanilla_predict(m.params, hs[i]).value()));
                    }
                } else if (tag_mode == "knn") {
                    for (auto& t : knn::tag_knn(m.params, m.vocab, *store, sent, tag_interp))
                        labels.push_back(t.label_id);
                } else {
                    auto mode = tag_mode == "gnn" ? gnn::GnnMode::Gnn : gnn::GnnMode::GnnKnn;
                    for (auto& t :
                         gnn::tag_gnn(m.params, m.vocab, *store, *gnn_params, sent,
                                      tag_wcfg, mode, tag_interp.lambda,
                                      tag_interp.temperature))
                        labels.push_back(t.label_id);
                }
                pred[s] = std::move(labels);
            };

            if (tag_threads <= 1) {
                for (std::size_t s = 0; s < sentences.size(); ++s) tag_one(s);
            } else {
                std::vector<std::thread> workers;
                std::atomic<std::size_t> next{0};
                for (std::size_t w = 0; w < tag_threads; ++w) {
                    workers.emplace_back([&] {
                        for (std::size_t s = next.fetch_add(1); s < sentences.size();
                             s = next.fetch_add(1)) {
                            tag_one(s);
                        }
                    });
                }
                for (auto& t : workers) t.join();
            }
            write_or_print(tag_out, tagged_conll(input.data, m.labels, pred));
            return 0;
        }

        if (*ev) {
            auto gold = parse_file(ev_gold, ev_scheme);
            auto pred_parsed = corpus::parse_conll(io::read_file(ev_pred),
                                                   gold.labels.scheme);
            std::optional<corpus::ParseResult> train;
            if (!ev_train.empty()) train = parse_file(ev_train, ev_scheme);

            // The three files may each cover a different subset of the label
            // inventory; score everything in their union.
            corpus::LabelSet set = gold.labels;
            auto absorb = [&set](const corpus::LabelSet& other) {
                for (const auto& n : other.names) {
                    if (set.find(n) < 0) set.names.push_back(n);
                }
            };
            absorb(pred_parsed.labels);
            if (train) absorb(train->labels);
            auto remap = [&set](corpus::Dataset& data, const corpus::LabelSet& from) {
                for (auto& sent : data.sentences) {
                    for (auto& l : sent.labels) l = set.id(from.name(l));
                }
            };
            remap(gold.data, gold.labels);
            remap(pred_parsed.data, pred_parsed.labels);
            if (train) remap(train->data, train->labels);

            std::vector<std::vector<int>> pred;
            for (auto& sent : pred_parsed.data.sentences) pred.push_back(sent.labels);
            auto rep = eval::evaluate(pred, gold.data, set,
                                      train ? &train->data : nullptr);
            write_or_print(ev_out, rep.to_text());
            return 0;
        }

        if (*ab) {
            harness::DataBundle data;
            auto train = parse_file(ab_train, ab_scheme);
            data.labels = train.labels;
            data.train = std::move(train.data);
            for (auto [path, split] :
                 {std::pair{&ab_dev, &data.dev}, std::pair{&ab_test, &data.test}}) {
                auto parsed = parse_file(*path, ab_scheme);
                for (auto& sent : parsed.data.sentences) {
                    for (auto& l : sent.labels) l = data.labels.id(parsed.labels.name(l));
                }
                *split = std::move(parsed.data);
            }
            plan.setups.clear();
            for (const auto& s : ab_setups) plan.setups.push_back(harness::setup_from_string(s));
            auto table = harness::run_plan(plan, data);
            std::cout << table.to_tsv();
            return 0;
        }
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
