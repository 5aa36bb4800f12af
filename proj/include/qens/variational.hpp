#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qens/data.hpp"
#include "qens/simulator.hpp"

namespace qens::variational {

/// 6n angles ordered (layer, qubit, [RZ1, RY, RZ2]); index
/// layer*3n + qubit*3 + slot. Angles are stored unwrapped.
struct LearnerParams {
    int num_qubits = 1;
    std::uint64_t seed = 0;
    std::vector<double> theta;

    int param_count() const { return 6 * num_qubits; }

    /// Uniform(-pi, pi) initialization.
    static LearnerParams random_init(int num_qubits, std::uint64_t seed);
};

struct TrainConfig {
    double learning_rate = 1e-2;
    int batch_size = 4;
    int epochs = 100;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    /// Swaps the class mapping to p(y=1) = p(qubit0 = 0).
    bool invert_class_map = false;
};

/// Register width for a feature count: max(1, ceil(log2(F))).
int learner_qubits(int num_features);

/// Amplitude encoding, RZ-RY-RZ layer, CNOT chain (i, i+1) when n >= 2,
/// second RZ-RY-RZ layer. Readout: p(y=1) = p(qubit0 = 1).
sim::Circuit build_learner_circuit(std::span<const double> x, const LearnerParams& params);

double predict_proba(std::span<const double> x, const LearnerParams& params,
                     bool invert_class_map = false);

/// Shot-mode inference readout.
double predict_proba_shots(std::span<const double> x, const LearnerParams& params, long shots,
                           std::uint64_t seed, bool invert_class_map = false);

/// Caches the encoded state of one sample so repeated evaluations (parameter
/// shifts) skip the encoding work.
class LearnerEvaluator {
  public:
    LearnerEvaluator(std::span<const double> x, int num_qubits);

    double probability(const std::vector<double>& theta, bool invert_class_map = false) const;

  private:
    int num_qubits_;
    std::vector<cdouble> encoded_;
    mutable std::vector<cdouble> scratch_;
};

/// Mean of -[y ln p + (1-y) ln(1-p)] with p clamped to [1e-12, 1-1e-12].
double bce_loss(const std::vector<double>& probs, const std::vector<int>& labels);

/// Weight-normalized variant: sum(w_i * loss_i) / sum(w_i).
double weighted_bce_loss(const std::vector<double>& probs, const std::vector<int>& labels,
                         const std::vector<double>& weights);

/// Batch-mean BCE gradient via the parameter-shift rule,
/// dp/dtheta_j = [p(+pi/2) - p(-pi/2)] / 2, chained through dL/dp.
/// `weights` (may be empty) switches to the weight-normalized mean.
std::vector<double> parameter_shift_gradient(const std::vector<std::vector<double>>& xs,
                                             const std::vector<int>& ys,
                                             const LearnerParams& params,
                                             const std::vector<double>& weights = {},
                                             bool invert_class_map = false);

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long t = 0;
};

void adam_step(LearnerParams& params, const std::vector<double>& grads, AdamState& state,
               const TrainConfig& config);

/// Same update on a bare parameter vector (used for concatenated ensemble
/// parameters).
void adam_step(std::vector<double>& theta, const std::vector<double>& grads, AdamState& state,
               const TrainConfig& config);

struct TrainResult {
    LearnerParams params;
    std::vector<double> loss_history;  // per-epoch mean loss
};

/// Mini-batch Adam training; batches come from a seeded shuffle each epoch.
/// With sample weights, batch gradients and losses are weight-normalized and
/// zero-weight batches are skipped outright. init_seed draws the starting
/// angles.
TrainResult train_learner(const data::DatasetView& train,
                          const std::vector<double>* sample_weights, const TrainConfig& config,
                          std::uint64_t init_seed);

/// `n,seed,theta_0,...,theta_{6n-1}` with 17 significant digits.
std::string serialize_learner(const LearnerParams& params);
LearnerParams parse_learner(const std::string& record);

}  // namespace qens::variational
