#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qens/config.hpp"
#include "qens/data.hpp"
#include "qens/metrics.hpp"

namespace qens::cli {

/// A dataset with its splits and the per-split preprocessed feature matrices
/// (scaler and PCA fit on training rows unless scale_scope is global).
struct PreparedData {
    std::string id;
    data::Dataset base;
    std::vector<data::SplitSpec> splits;
    /// per_split[j]: features after split j's preprocessing, same row order
    /// and labels as base.
    std::vector<data::Dataset> per_split;
};

/// Materializes the config's dataset spec: one entry for blobs/csv, 18 for
/// blob_grid. Split and scaling seeds derive from the experiment seed.
std::vector<PreparedData> prepare_datasets(const ExperimentConfig& config);

/// Rejects any model whose circuit width exceeds the simulator cap, and
/// cosine models whose n_feature cannot hold the dataset's features. Runs
/// before any training.
void check_qubit_budget(const ExperimentConfig& config, int num_features);

/// One evaluated (dataset, model, config, split) with provenance.
struct ResultRow {
    std::string dataset_id;
    metrics::MetricsRecord record;
    std::string config_hash;
    std::uint64_t seed = 0;
};

/// Mean and standard error over splits for one (dataset, model, config).
/// Standard errors are NaN when n == 1 (rendered as empty CSV fields).
struct AggregateRow {
    std::string dataset_id;
    std::string model_id;
    std::string config_id;
    int n = 0;
    double accuracy_mean = 0.0;
    double accuracy_se = 0.0;
    double f1_mean = 0.0;
    double f1_se = 0.0;
    double brier_mean = 0.0;
    double brier_se = 0.0;
};

/// The winning config of one model under one ordering (accuracy | f1_weighted).
struct BestConfigRow {
    std::string ordering;
    AggregateRow agg;
};

/// Best-config model scores vs. the forest baseline's, one metric at a time.
struct TTestRow {
    std::string dataset_id;
    std::string model_id;
    std::string model_config;
    std::string baseline_config;
    std::string ordering;
    std::string metric;
    metrics::TTestResult test;
    bool significant = false;
};

struct ResultsTable {
    std::vector<ResultRow> rows;
    std::vector<AggregateRow> aggregates;
    std::vector<BestConfigRow> best;
    std::vector<TTestRow> ttests;
};

double mean_of(const std::vector<double>& values);
/// Sample standard deviation / sqrt(n); NaN when n < 2.
double stderr_of(const std::vector<double>& values);

/// Writes the 18-configuration blob grid: per dataset a directory with
/// data.csv plus one split index file per split. Byte-identical per seed.
void cmd_gen_blobs(const ExperimentConfig& config);

/// Cross-validated hyper-parameter search on each split's training rows for
/// every model marked search: ranked per-split tables plus a manifest with
/// the best config per (dataset, model) by mean score over splits.
void cmd_search(const ExperimentConfig& config);

/// Trains every (dataset, model, split), evaluates on the held-out test rows,
/// and writes results.csv, aggregates.csv, best_configs.csv, ttests.csv, and
/// run_manifest.txt under out_dir. Only the results.csv timestamp header
/// differs between identical runs.
ResultsTable cmd_train_eval(const ExperimentConfig& config);

/// Renders results_dir/results.csv (+ ttests.csv when present) into
/// summary.txt and plot_data.csv with columns model,metric,mean,stderr.
void cmd_report(const std::string& results_dir);

/// Loads the ensemble manifest named by config.predict, scores the input CSV,
/// and writes predictions.csv (row,probability,label).
void cmd_predict(const ExperimentConfig& config);

}  // namespace qens::cli
