#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qens/cosine.hpp"
#include "qens/data.hpp"
#include "qens/ensemble.hpp"
#include "qens/forest.hpp"

namespace qens::cli {

enum class DatasetKind { blobs, blob_grid, csv };

/// Where the min-max scaler is fit: over the whole dataset at generation time,
/// or per split on the training rows only.
enum class ScaleScope { global, train };

enum class TTestKind { welch, paired };

struct DatasetSpec {
    DatasetKind kind = DatasetKind::blobs;

    /// blobs: one cluster configuration. blob.seed defaults to a value derived
    /// from the experiment seed unless the config sets it explicitly.
    data::BlobConfig blob;
    bool blob_seed_explicit = false;

    /// csv: file path plus an optional feature selection. pca_components and
    /// feature_names are mutually exclusive; with neither, all columns are used.
    std::string path;
    std::optional<int> pca_components;
    std::vector<std::string> feature_names;
};

enum class ModelKind { qcc, qec, qecru, soft_vote, bagging, adaboost, forest };

const char* model_kind_name(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

/// One classifier entry from the config's model list. Only the fields for the
/// entry's kind are meaningful.
struct ModelSpec {
    ModelKind kind = ModelKind::qcc;
    /// Hyper-parameters come from the search manifest instead of this entry.
    bool search = false;

    cosine::CosineConfig cosine;                                           // qcc/qec/qecru
    ensemble::EnsembleTrainConfig ens;                                     // variational kinds
    ensemble::BaggingWeighting weighting = ensemble::BaggingWeighting::uniform;  // bagging
    ensemble::GridSpec grid;                                               // search grid
    forest::ForestConfig forest;                                           // forest
    int n_iter = 20;                                                       // forest search draws

    bool is_cosine() const;
    bool is_ensemble() const;
    /// Stable identifier of the explicit hyper-parameters, e.g.
    /// "qec_d1_nt2_ns1_nf2" or "bagging_lr0.01_b4_l3_e100".
    std::string config_id() const;
};

struct PredictSpec {
    std::string manifest;
    std::string input;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    int workers = 1;
    cosine::EvalMode mode = cosine::EvalMode::exact;
    long shots = 8192;
    std::string out_dir = "out";
    int splits = 10;
    double test_fraction = 0.2;
    ScaleScope scale_scope = ScaleScope::train;
    TTestKind t_test = TTestKind::welch;
    DatasetSpec dataset;
    std::vector<ModelSpec> models;
    std::optional<PredictSpec> predict;
};

/// Parses and validates a JSON experiment config. Syntax errors report
/// line:column; semantic errors name the offending key path. Unknown keys are
/// rejected.
ExperimentConfig parse_config(const std::string& text, const std::string& source_name);
ExperimentConfig load_config(const std::string& path);

}  // namespace qens::cli
