#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gnnsl/corpus.hpp"
#include "gnnsl/datastore.hpp"
#include "gnnsl/encoder.hpp"
#include "gnnsl/eval.hpp"
#include "gnnsl/gnn.hpp"
#include "gnnsl/knnsl.hpp"

namespace gnnsl::harness {

enum class Setup { Vanilla, VanillaKnn, VanillaGnn, VanillaGnnKnn };

std::string setup_name(Setup s);
Setup setup_from_string(const std::string& s);

/// Train/dev/test bundle; synthetic corpora and file-backed corpora both
/// reduce to this.
using DataBundle = corpus::SyntheticCorpus;

struct ExperimentPlan {
    std::vector<Setup> setups = {Setup::Vanilla, Setup::VanillaKnn, Setup::VanillaGnn,
                                 Setup::VanillaGnnKnn};
    std::vector<std::uint64_t> seeds = {1};
    std::vector<std::size_t> k_sweep;        // extra vanilla+knn rows per k
    std::vector<std::size_t> context_sweep;  // extra vanilla+gnn rows per radius
    bool ablate_labels = false;              // extra vanilla+gnn row without label nodes
    bool ablate_raw_keys = false;            // extra row with an untrained-encoder store
    std::string output_dir = "runs";

    enc::EncoderConfig encoder_cfg;
    gnn::GnnConfig gnn_cfg;
    graph::WindowConfig window_cfg;
    std::size_t default_k = 32;

    void validate() const;
};

struct ResultRow {
    std::string setup;  // setup name plus ablation tag, e.g. "vanilla+gnn[no-labels]"
    std::uint64_t seed = 0;
    std::size_t k = 0;
    std::size_t context = 0;
    bool label_nodes = true;
    bool finetuned_keys = true;
    double lambda = 1.0;
    double temperature = 1.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double long_tail_f1 = 0.0;
    double token_accuracy = 0.0;
    std::string config_digest;
    std::string error;  // nonempty when this cell aborted
};

struct ResultTable {
    std::vector<ResultRow> rows;

    std::string to_tsv() const;
    const ResultRow* find(const std::string& setup, std::uint64_t seed) const;
};

/// How often each training stage actually ran (cache misses).
struct StageCounters {
    std::size_t encoder_trainings = 0;
    std::size_t store_builds = 0;
    std::size_t gnn_trainings = 0;
};

/// Runs every (setup, seed) cell plus the requested ablation arms, caching
/// checkpoints under <output_dir>/cache keyed by config digests. A failing
/// cell is recorded in its row; remaining cells still run. Writes the table
/// and a flat summary into output_dir.
ResultTable run_plan(const ExperimentPlan& plan, const DataBundle& data,
                     StageCounters* counters = nullptr);

}  // namespace gnnsl::harness
