#pragma once

#include <complex>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "qens/linalg.hpp"
#include "qens/rng.hpp"

namespace qens::sim {

using qens::cdouble;

/// Maximum register width accepted by QuantumState construction. Defaults to
/// 26 and can be overridden through the QENS_MAX_QUBITS environment variable
/// (read once at first use) or set_max_qubits().
int max_qubits();
void set_max_qubits(int n);

/// Dense n-qubit statevector. Qubit 0 is the least significant bit of the
/// basis-state index; every bitstring produced or consumed by this module
/// follows that convention, with character i of a bitstring naming qubit i.
struct QuantumState {
    int num_qubits = 0;
    std::vector<cdouble> amps;

    /// |0...0> on n qubits. Rejects n above the configured cap before
    /// allocating.
    static QuantumState zero(int n);

    std::size_t dim() const { return amps.size(); }
    double norm_sq() const;
};

struct Gate {
    enum class Kind { H, RY, RZ, CNOT, Swap, CSwap, Unitary, ControlledUnitary };

    Kind kind;
    std::vector<int> controls;  // CNOT/CSwap control, ControlledUnitary controls
    std::vector<int> targets;
    double angle = 0.0;  // RY/RZ
    CMatrix matrix;      // Unitary/ControlledUnitary

    static Gate h(int q);
    static Gate ry(int q, double angle);
    static Gate rz(int q, double angle);
    static Gate cnot(int control, int target);
    static Gate swap(int a, int b);
    static Gate cswap(int control, int a, int b);
    /// Matrix dim must be 2^targets.size(); targets[0] indexes the least
    /// significant bit of the matrix row/column index.
    static Gate unitary(std::vector<int> targets, CMatrix m);
    static Gate controlled_unitary(std::vector<int> controls, std::vector<int> targets,
                                   CMatrix m);

    /// All qubits the gate touches (controls then targets).
    std::vector<int> qubits() const;
    const char* name() const;
};

struct Circuit {
    int num_qubits = 0;
    std::string name;
    std::vector<Gate> gates;

    Circuit() = default;
    explicit Circuit(int n, std::string name = "") : num_qubits(n), name(std::move(name)) {}

    /// Validates qubit indices against the circuit width.
    void add(Gate g);

    /// Logical layer count (ASAP scheduling over the gate list).
    int depth() const;
    /// Layer count over gates touching two or more qubits only.
    int multiqubit_depth() const;
};

/// In-place unitary action; norm is preserved to ~1e-15 per gate.
void apply_gate(QuantumState& state, const Gate& gate);

QuantumState run_circuit(const Circuit& circuit, QuantumState initial);

/// Zero-pads `features` to 2^num_qubits, L2-normalizes, and writes the result
/// as real amplitudes. Throws on zero norm or if the vector does not fit.
QuantumState amplitude_encode(std::span<const double> features, int num_qubits);

/// Real orthogonal matrix whose first column is the encoded feature vector,
/// i.e. a state-preparation unitary for amplitude_encode (Householder
/// reflection). dim = 2^num_target_qubits.
CMatrix state_prep_unitary(std::span<const double> features, int num_target_qubits);

/// p(qubit = 1) from the exact amplitudes.
double marginal_probability(const QuantumState& state, int qubit);

/// Multinomial sample of `shots` basis states from |a_i|^2. Keys are
/// bitstrings with character i = qubit i. Deterministic for a fixed seed.
std::map<std::string, long> sample_bitstrings(const QuantumState& state, long shots,
                                              std::uint64_t seed);

/// Shot-based estimate of marginal_probability.
double sampled_marginal(const QuantumState& state, int qubit, long shots, std::uint64_t seed);

/// Haar-distributed unitary of the given dimension via QR (modified
/// Gram-Schmidt) of a complex Ginibre matrix; the positive-diagonal R
/// normalization makes the factor unique and uniform.
CMatrix haar_random_unitary(int dim, std::uint64_t seed);
CMatrix haar_random_unitary(int dim, Rng& rng);

/// Debug dump, one `basis_index,re,im` line per amplitude.
void dump_state_csv(const QuantumState& state, std::ostream& os);

}  // namespace qens::sim
