#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "qens/data.hpp"
#include "qens/simulator.hpp"

namespace qens::cosine {

struct Sample {
    std::vector<double> x;
    int y = 0;
};

/// Parameters of the cosine-classifier family. d = 0 is the plain
/// single-sample classifier; d >= 1 adds a control register that superposes
/// 2^d training-set permutations.
struct CosineConfig {
    int d = 0;
    int n_train = 1;
    int n_swap = 1;
    int n_feature = 2;
    std::uint64_t seed = 0;

    /// log2(n_feature); feature register width.
    int q_f() const;
    /// d + n_train*(q_f+1) + q_f + 1.
    int qec_qubit_count() const;
    void validate() const;

    std::string id() const;
};

/// Closed-form readout: with c the cosine of the two raw vectors (equal to
/// the inner product of their normalized zero-padded encodings),
/// p(y_test = 1) = y*(1+c^2)/2 + (1-y)*(1-c^2)/2.
double qcc_oracle(std::span<const double> train_x, int train_y, std::span<const double> test_x);

/// Swap-test circuit over 2*q_f + 2 qubits: train features [0, q_f), label
/// q_f, test features [q_f+1, 2*q_f+1), ancilla last. Readout is the ancilla
/// marginal.
sim::Circuit build_qcc_circuit(std::span<const double> train_x, int train_y,
                               std::span<const double> test_x, int q_f);

/// The seeded controlled-swap layout: n_swap training-register pairs per
/// control qubit, in gate order. Branch b applies the pairs of every control
/// whose bit is set in b.
struct BranchSelection {
    int d = 0;
    int n_train = 1;
    int n_swap = 1;
    std::vector<std::pair<int, int>> swap_pairs;

    int num_branches() const { return 1 << d; }
    /// Register -> original sample index after branch b's swaps.
    std::vector<int> permutation(int branch) const;
    /// The sample feeding the swap test on branch b.
    int register0_sample(int branch) const;
};

BranchSelection swap_schedule(const CosineConfig& config);

struct QecCircuit {
    sim::Circuit circuit;
    BranchSelection branches;
};

/// Layout: controls [0, d), training register r at d + r*(q_f+1) (features
/// then label), test register, ancilla last. Readout is the ancilla marginal.
QecCircuit build_qec_circuit(const CosineConfig& config, const std::vector<Sample>& train_set,
                             std::span<const double> test_x);

/// Mean of qcc_oracle over the 2^d branch-selected register-0 samples.
double qec_oracle(const CosineConfig& config, const std::vector<Sample>& train_set,
                  std::span<const double> test_x);

/// One controlled random-unitary application: U (dim 2^(q_f+1)) hits the
/// features+label of one training register; matrix bit j = feature qubit j,
/// top bit = label.
struct QecruBlock {
    int target_register = 0;
    CMatrix unitary;
};

std::vector<QecruBlock> qecru_schedule(const CosineConfig& config);

sim::Circuit build_qecru_circuit(const CosineConfig& config, const std::vector<Sample>& train_set,
                                 std::span<const double> test_x);
sim::Circuit build_qecru_circuit(const CosineConfig& config, const std::vector<Sample>& train_set,
                                 std::span<const double> test_x,
                                 const std::vector<QecruBlock>& blocks);

enum class CosineKind { qcc, qec, qecru };
enum class EvalMode { exact, shots };

struct EvalOptions {
    EvalMode mode = EvalMode::exact;
    long shots = 8192;
    std::uint64_t shot_seed = 0;
    /// Exact mode only: receives CSV rows `test_index,branch,probability`,
    /// one per control branch.
    std::ostream* trace = nullptr;
};

/// Ancilla readout of a built cosine circuit. In exact mode branch_probs (if
/// non-null) receives p(ancilla = 1 | control bitstring = b) for each branch.
double evaluate_readout(const sim::Circuit& circuit, int d, const EvalOptions& opts,
                        std::uint64_t shot_seed, std::vector<double>* branch_probs);

/// Per test row: draws the training subset without replacement (seeded by
/// config.seed and the test index), builds the circuit, reads out p(y=1).
std::vector<double> cosine_predict(CosineKind kind, const CosineConfig& config,
                                   const data::DatasetView& train_pool,
                                   const data::DatasetView& test,
                                   const EvalOptions& opts = {});

}  // namespace qens::cosine
