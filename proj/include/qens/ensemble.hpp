#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qens/data.hpp"
#include "qens/simulator.hpp"
#include "qens/variational.hpp"

namespace qens::ensemble {

enum class EnsembleKind { soft_vote, bagging, adaboost };

const char* kind_name(EnsembleKind kind);
EnsembleKind parse_kind(const std::string& name);

/// A committee of variational learners plus aggregation weights.
/// soft_vote averages, bagging takes the weighted mean (weights sum to 1),
/// adaboost weights by the round coefficients alpha_t.
struct EnsembleModel {
    EnsembleKind kind = EnsembleKind::soft_vote;
    std::vector<variational::LearnerParams> learners;
    std::vector<double> learner_weights;
    bool invert_class_map = false;

    int num_learners() const { return static_cast<int>(learners.size()); }
    /// Qubits per learner (uniform across the committee).
    int learner_qubit_count() const;
    /// Register width of the joint product circuit: n * num_learners.
    int total_qubits() const;
    int param_count() const;
};

/// Per-learner class-1 probabilities, one exact evaluation each.
std::vector<double> learner_probabilities(const EnsembleModel& model, std::span<const double> x);

/// Combines per-learner probabilities by the model's aggregation rule.
double aggregate_probability(const EnsembleModel& model, const std::vector<double>& probs);

double ensemble_predict(const EnsembleModel& model, std::span<const double> x);
std::vector<double> ensemble_predict(const EnsembleModel& model, const data::DatasetView& view);

/// Mean of the committee; rejects models of any other kind.
double soft_vote_predict(const EnsembleModel& model, std::span<const double> x);

/// Shot-mode aggregation: each learner is read out with `shots` samples under
/// a derived seed.
double ensemble_predict_shots(const EnsembleModel& model, std::span<const double> x, long shots,
                              std::uint64_t seed);

/// All learners side by side on disjoint qubit blocks; learner k reads out
/// qubit k*n. With no cross-block gates the joint state is the product of the
/// learner states, so joint marginals equal per-learner evaluation.
sim::Circuit build_joint_circuit(const EnsembleModel& model, std::span<const double> x);

/// Per-learner probabilities through the joint circuit when it fits the qubit
/// cap, falling back to per-learner evaluation (identical values) otherwise.
std::vector<double> joint_learner_probabilities(const EnsembleModel& model,
                                                std::span<const double> x);

struct EnsembleTrainConfig {
    variational::TrainConfig learner;
    int num_learners = 1;
};

enum class BaggingWeighting { uniform, train_accuracy };

struct EnsembleTrainResult {
    EnsembleModel model;
    /// soft_vote: per-epoch joint loss. bagging/adaboost: empty.
    std::vector<double> loss_history;
    /// adaboost: clamped weighted error per round. Others: empty.
    std::vector<double> round_errors;
};

/// d BCE(mean_k p_k) / d theta over a batch (sample mean), concatenated
/// learner-major: entry k * 6n + j belongs to learner k. Every learner feels
/// every sample through the shared mean.
std::vector<double> soft_vote_gradient(const EnsembleModel& model,
                                       const std::vector<std::vector<double>>& xs,
                                       const std::vector<int>& ys);

/// Joint training: one Adam run over all learner parameters with loss
/// BCE(mean probability).
EnsembleTrainResult train_soft_vote(const data::DatasetView& train,
                                    const EnsembleTrainConfig& config);

/// Seeded shuffle of [0, n) cut into num_subsets disjoint contiguous chunks
/// whose sizes differ by at most one; each chunk is returned sorted.
std::vector<std::vector<int>> bagging_partition(int n, int num_subsets, std::uint64_t seed);

/// Disjoint near-equal subsets from a seeded shuffle, one independent learner
/// per subset. Weights are uniform unless train_accuracy weighting is chosen.
EnsembleTrainResult train_bagging(const data::DatasetView& train,
                                  const EnsembleTrainConfig& config,
                                  BaggingWeighting weighting = BaggingWeighting::uniform);

/// Boosting over weighted subsets of ceil(N / num_learners) samples. Round
/// errors are measured on the full training set and clamped to
/// [1e-10, 0.5 - 1e-10] before alpha_t = ln((1 - eps) / eps) / 2.
EnsembleTrainResult train_adaboost(const data::DatasetView& train,
                                   const EnsembleTrainConfig& config);

EnsembleTrainResult train_ensemble(EnsembleKind kind, const data::DatasetView& train,
                                   const EnsembleTrainConfig& config);

struct GridPoint {
    double learning_rate = 1e-2;
    int batch_size = 1;
    int ensemble_size = 1;
};

/// Hyper-parameter grid: learning rates x batch sizes x committee sizes,
/// enumerated learning-rate-major.
struct GridSpec {
    std::vector<double> learning_rates = {1e-3, 1e-2, 1e-1};
    std::vector<int> batch_sizes = {1, 2, 4, 8, 16};
    std::vector<int> ensemble_sizes = {1, 2, 3, 4, 5, 6, 7};
    int epochs = 100;

    std::vector<GridPoint> enumerate() const;
};

struct GridResult {
    GridPoint point;
    double median_val_accuracy = 0.0;
    std::vector<double> fold_accuracies;
};

/// Cross-validated sweep: every grid point is trained on each fold complement
/// and scored on the held-out fold; points are ranked by median validation
/// accuracy (ties keep enumeration order). fold_ids[i] assigns view row i to a
/// fold in [0, num_folds).
std::vector<GridResult> grid_search(EnsembleKind kind, const data::DatasetView& train,
                                    const std::vector<int>& fold_ids, int num_folds,
                                    const GridSpec& spec, std::uint64_t seed, int workers = 1);

/// Text manifest: kind, flags, weights, then one learner record per line.
std::string serialize_ensemble(const EnsembleModel& model);
EnsembleModel parse_ensemble(const std::string& manifest);

double median(std::vector<double> values);

}  // namespace qens::ensemble
