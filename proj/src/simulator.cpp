#include "qens/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

#include "qens/common.hpp"

namespace qens::sim {

namespace {

constexpr int kDefaultMaxQubits = 26;

std::atomic<int> g_max_qubits{0};

int read_cap_from_env() {
    if (const char* env = std::getenv("QENS_MAX_QUBITS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1 && v <= 40) return static_cast<int>(v);
    }
    return kDefaultMaxQubits;
}

void check_indices(const std::vector<int>& qubits, int num_qubits, const char* what) {
    for (std::size_t i = 0; i < qubits.size(); ++i) {
        const int q = qubits[i];
        if (q < 0 || q >= num_qubits) {
            std::ostringstream msg;
            msg << what << ": qubit index " << q << " out of range for " << num_qubits
                << "-qubit register";
            throw std::out_of_range(msg.str());
        }
        for (std::size_t j = i + 1; j < qubits.size(); ++j) {
            if (qubits[j] == q) {
                std::ostringstream msg;
                msg << what << ": duplicate qubit index " << q;
                throw std::invalid_argument(msg.str());
            }
        }
    }
}

void apply_single_qubit(QuantumState& state, int q, cdouble u00, cdouble u01, cdouble u10,
                        cdouble u11) {
    const std::size_t mask = std::size_t{1} << q;
    const std::size_t lo = mask - 1;
    const std::size_t hi = ~lo;
    const std::size_t pairs = state.dim() >> 1;
    cdouble* a = state.amps.data();
    for (std::size_t k = 0; k < pairs; ++k) {
        const std::size_t i0 = ((k & hi) << 1) | (k & lo);
        const std::size_t i1 = i0 | mask;
        const cdouble v0 = a[i0];
        const cdouble v1 = a[i1];
        a[i0] = u00 * v0 + u01 * v1;
        a[i1] = u10 * v0 + u11 * v1;
    }
}

/// Expands k (a value over the free bit positions) into a full basis index,
/// skipping the positions named in sorted_masks.
inline std::size_t expand_index(std::size_t k, const std::vector<std::size_t>& sorted_masks) {
    std::size_t idx = k;
    for (const std::size_t m : sorted_masks) {
        const std::size_t low = m - 1;
        idx = ((idx & ~low) << 1) | (idx & low);
    }
    return idx;
}

void apply_matrix_gate(QuantumState& state, const std::vector<int>& controls,
                       const std::vector<int>& targets, const CMatrix& m) {
    const int nt = static_cast<int>(targets.size());
    const std::size_t block = std::size_t{1} << nt;

    // Free positions iterate; control bits are forced to 1.
    std::vector<std::size_t> fixed_masks;
    fixed_masks.reserve(controls.size() + targets.size());
    std::size_t control_mask = 0;
    for (const int c : controls) {
        fixed_masks.push_back(std::size_t{1} << c);
        control_mask |= std::size_t{1} << c;
    }
    for (const int t : targets) fixed_masks.push_back(std::size_t{1} << t);
    std::sort(fixed_masks.begin(), fixed_masks.end());

    std::vector<std::size_t> target_masks;
    target_masks.reserve(targets.size());
    for (const int t : targets) target_masks.push_back(std::size_t{1} << t);

    // Offsets of each target sub-index combination relative to the base index.
    std::vector<std::size_t> offsets(block);
    for (std::size_t s = 0; s < block; ++s) {
        std::size_t off = 0;
        for (int b = 0; b < nt; ++b)
            if ((s >> b) & 1) off |= target_masks[static_cast<std::size_t>(b)];
        offsets[s] = off;
    }

    const int free_bits = state.num_qubits - nt - static_cast<int>(controls.size());
    const std::size_t groups = std::size_t{1} << free_bits;
    std::vector<cdouble> in(block), out(block);
    cdouble* a = state.amps.data();
    for (std::size_t k = 0; k < groups; ++k) {
        const std::size_t base = expand_index(k, fixed_masks) | control_mask;
        for (std::size_t s = 0; s < block; ++s) in[s] = a[base | offsets[s]];
        for (std::size_t r = 0; r < block; ++r) {
            cdouble acc = 0.0;
            const cdouble* row = m.data().data() + r * block;
            for (std::size_t c = 0; c < block; ++c) acc += row[c] * in[c];
            out[r] = acc;
        }
        for (std::size_t s = 0; s < block; ++s) a[base | offsets[s]] = out[s];
    }
}

void apply_swap(QuantumState& state, int qa, int qb, int control) {
    const std::size_t ma = std::size_t{1} << qa;
    const std::size_t mb = std::size_t{1} << qb;
    const std::size_t mc = control >= 0 ? (std::size_t{1} << control) : 0;
    cdouble* a = state.amps.data();
    const std::size_t dim = state.dim();
    // Swap amplitude pairs that differ only in qubits a,b (bit a set, bit b
    // clear), restricted to control = 1 when present.
    for (std::size_t i = 0; i < dim; ++i) {
        if ((i & ma) && !(i & mb) && ((i & mc) == mc)) {
            const std::size_t j = (i & ~ma) | mb;
            std::swap(a[i], a[j]);
        }
    }
}

}  // namespace

int max_qubits() {
    int cap = g_max_qubits.load(std::memory_order_relaxed);
    if (cap == 0) {
        cap = read_cap_from_env();
        g_max_qubits.store(cap, std::memory_order_relaxed);
    }
    return cap;
}

void set_max_qubits(int n) {
    if (n < 1) throw std::invalid_argument("set_max_qubits: cap must be at least 1");
    g_max_qubits.store(n, std::memory_order_relaxed);
}

QuantumState QuantumState::zero(int n) {
    if (n < 1) throw std::invalid_argument("QuantumState: need at least one qubit");
    const int cap = max_qubits();
    if (n > cap) {
        std::ostringstream msg;
        msg << "QuantumState: " << n << " qubits exceeds the simulator cap of " << cap
            << " qubits (override with QENS_MAX_QUBITS)";
        throw ResourceError(msg.str());
    }
    QuantumState s;
    s.num_qubits = n;
    s.amps.assign(std::size_t{1} << n, cdouble{});
    s.amps[0] = 1.0;
    return s;
}

double QuantumState::norm_sq() const {
    double acc = 0.0;
    for (const cdouble& a : amps) acc += std::norm(a);
    return acc;
}

Gate Gate::h(int q) {
    Gate g;
    g.kind = Kind::H;
    g.targets = {q};
    return g;
}

Gate Gate::ry(int q, double angle) {
    Gate g;
    g.kind = Kind::RY;
    g.targets = {q};
    g.angle = angle;
    return g;
}

Gate Gate::rz(int q, double angle) {
    Gate g;
    g.kind = Kind::RZ;
    g.targets = {q};
    g.angle = angle;
    return g;
}

Gate Gate::cnot(int control, int target) {
    Gate g;
    g.kind = Kind::CNOT;
    g.controls = {control};
    g.targets = {target};
    return g;
}

Gate Gate::swap(int a, int b) {
    Gate g;
    g.kind = Kind::Swap;
    g.targets = {a, b};
    return g;
}

Gate Gate::cswap(int control, int a, int b) {
    Gate g;
    g.kind = Kind::CSwap;
    g.controls = {control};
    g.targets = {a, b};
    return g;
}

Gate Gate::unitary(std::vector<int> targets, CMatrix m) {
    Gate g;
    g.kind = Kind::Unitary;
    g.targets = std::move(targets);
    if (g.targets.empty()) throw std::invalid_argument("Gate::unitary: no targets");
    const std::size_t want = std::size_t{1} << g.targets.size();
    if (m.rows() != static_cast<int>(want) || m.cols() != static_cast<int>(want))
        throw std::invalid_argument("Gate::unitary: matrix dimension must be 2^targets");
    if (!m.is_unitary())
        throw std::invalid_argument("Gate::unitary: matrix is not unitary within 1e-10");
    g.matrix = std::move(m);
    return g;
}

Gate Gate::controlled_unitary(std::vector<int> controls, std::vector<int> targets, CMatrix m) {
    Gate g = unitary(std::move(targets), std::move(m));
    g.kind = Kind::ControlledUnitary;
    g.controls = std::move(controls);
    if (g.controls.empty())
        throw std::invalid_argument("Gate::controlled_unitary: no control qubits");
    return g;
}

std::vector<int> Gate::qubits() const {
    std::vector<int> all = controls;
    all.insert(all.end(), targets.begin(), targets.end());
    return all;
}

const char* Gate::name() const {
    switch (kind) {
        case Kind::H: return "h";
        case Kind::RY: return "ry";
        case Kind::RZ: return "rz";
        case Kind::CNOT: return "cnot";
        case Kind::Swap: return "swap";
        case Kind::CSwap: return "cswap";
        case Kind::Unitary: return "unitary";
        case Kind::ControlledUnitary: return "controlled_unitary";
    }
    return "?";
}

void Circuit::add(Gate g) {
    check_indices(g.qubits(), num_qubits, g.name());
    gates.push_back(std::move(g));
}

namespace {
int depth_impl(const Circuit& c, bool multiqubit_only) {
    std::vector<int> level(static_cast<std::size_t>(c.num_qubits), 0);
    int depth = 0;
    for (const Gate& g : c.gates) {
        const std::vector<int> qs = g.qubits();
        if (multiqubit_only && qs.size() < 2) continue;
        int l = 0;
        for (const int q : qs) l = std::max(l, level[static_cast<std::size_t>(q)]);
        ++l;
        for (const int q : qs) level[static_cast<std::size_t>(q)] = l;
        depth = std::max(depth, l);
    }
    return depth;
}
}  // namespace

int Circuit::depth() const { return depth_impl(*this, false); }
int Circuit::multiqubit_depth() const { return depth_impl(*this, true); }

void apply_gate(QuantumState& state, const Gate& gate) {
    check_indices(gate.qubits(), state.num_qubits, gate.name());
    switch (gate.kind) {
        case Gate::Kind::H: {
            const double s = M_SQRT1_2;
            apply_single_qubit(state, gate.targets[0], s, s, s, -s);
            return;
        }
        case Gate::Kind::RY: {
            const double c = std::cos(gate.angle / 2);
            const double s = std::sin(gate.angle / 2);
            apply_single_qubit(state, gate.targets[0], c, -s, s, c);
            return;
        }
        case Gate::Kind::RZ: {
            const cdouble e0 = std::polar(1.0, -gate.angle / 2);
            const cdouble e1 = std::polar(1.0, gate.angle / 2);
            apply_single_qubit(state, gate.targets[0], e0, 0.0, 0.0, e1);
            return;
        }
        case Gate::Kind::CNOT: {
            const std::size_t mc = std::size_t{1} << gate.controls[0];
            const std::size_t mt = std::size_t{1} << gate.targets[0];
            cdouble* a = state.amps.data();
            const std::size_t dim = state.dim();
            for (std::size_t i = 0; i < dim; ++i) {
                if ((i & mc) && !(i & mt)) std::swap(a[i], a[i | mt]);
            }
            return;
        }
        case Gate::Kind::Swap:
            apply_swap(state, gate.targets[0], gate.targets[1], -1);
            return;
        case Gate::Kind::CSwap:
            apply_swap(state, gate.targets[0], gate.targets[1], gate.controls[0]);
            return;
        case Gate::Kind::Unitary:
        case Gate::Kind::ControlledUnitary:
            apply_matrix_gate(state, gate.controls, gate.targets, gate.matrix);
            return;
    }
}

QuantumState run_circuit(const Circuit& circuit, QuantumState initial) {
    if (initial.num_qubits != circuit.num_qubits) {
        std::ostringstream msg;
        msg << "run_circuit: state width " << initial.num_qubits << " != circuit width "
            << circuit.num_qubits;
        throw std::invalid_argument(msg.str());
    }
    for (const Gate& g : circuit.gates) apply_gate(initial, g);
    return initial;
}

QuantumState amplitude_encode(std::span<const double> features, int num_qubits) {
    const std::size_t dim = std::size_t{1} << num_qubits;
    if (features.size() > dim) {
        std::ostringstream msg;
        msg << "amplitude_encode: " << features.size() << " features exceed 2^" << num_qubits
            << " register capacity";
        throw std::invalid_argument(msg.str());
    }
    double norm_sq = 0.0;
    for (const double v : features) norm_sq += v * v;
    if (norm_sq <= 0.0)
        throw std::invalid_argument("amplitude_encode: feature vector has zero norm");
    const double inv = 1.0 / std::sqrt(norm_sq);

    QuantumState s = QuantumState::zero(num_qubits);
    s.amps[0] = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) s.amps[i] = features[i] * inv;
    return s;
}

CMatrix state_prep_unitary(std::span<const double> features, int num_target_qubits) {
    const QuantumState encoded = amplitude_encode(features, num_target_qubits);
    const int dim = static_cast<int>(encoded.dim());

    // Householder reflection swapping e0 and the encoded vector v:
    // U = I - 2 w w^T with w = (e0 - v) / |e0 - v|.
    std::vector<double> w(static_cast<std::size_t>(dim));
    w[0] = 1.0 - encoded.amps[0].real();
    for (int i = 1; i < dim; ++i) w[static_cast<std::size_t>(i)] = -encoded.amps[static_cast<std::size_t>(i)].real();
    double wn = 0.0;
    for (const double v : w) wn += v * v;

    CMatrix u = CMatrix::identity(dim);
    if (wn < 1e-28) return u;  // v == e0
    for (int r = 0; r < dim; ++r)
        for (int c = 0; c < dim; ++c)
            u(r, c) -= 2.0 * w[static_cast<std::size_t>(r)] * w[static_cast<std::size_t>(c)] / wn;
    return u;
}

double marginal_probability(const QuantumState& state, int qubit) {
    check_indices({qubit}, state.num_qubits, "marginal_probability");
    const std::size_t mask = std::size_t{1} << qubit;
    double p1 = 0.0;
    const std::size_t dim = state.dim();
    for (std::size_t i = 0; i < dim; ++i) {
        if (i & mask) p1 += std::norm(state.amps[i]);
    }
    return p1;
}

std::map<std::string, long> sample_bitstrings(const QuantumState& state, long shots,
                                              std::uint64_t seed) {
    if (shots < 1) throw std::invalid_argument("sample_bitstrings: shots must be >= 1");
    Rng rng(seed);
    std::vector<double> draws(static_cast<std::size_t>(shots));
    for (double& d : draws) d = rng.uniform();
    std::sort(draws.begin(), draws.end());

    std::vector<long> counts;
    std::vector<std::size_t> indices;
    double cum = 0.0;
    std::size_t j = 0;
    const std::size_t dim = state.dim();
    for (std::size_t i = 0; i < dim && j < draws.size(); ++i) {
        const double p = std::norm(state.amps[i]);
        if (p == 0.0) continue;
        cum += p;
        long c = 0;
        while (j < draws.size() && draws[j] < cum) {
            ++c;
            ++j;
        }
        if (c > 0) {
            counts.push_back(c);
            indices.push_back(i);
        }
    }
    // Floating-point cum may land just short of 1; dump stragglers on the
    // last nonzero amplitude.
    if (j < draws.size()) {
        std::size_t last = dim - 1;
        while (last > 0 && std::norm(state.amps[last]) == 0.0) --last;
        if (!indices.empty() && indices.back() == last) {
            counts.back() += static_cast<long>(draws.size() - j);
        } else {
            indices.push_back(last);
            counts.push_back(static_cast<long>(draws.size() - j));
        }
    }

    std::map<std::string, long> out;
    for (std::size_t k = 0; k < indices.size(); ++k) {
        std::string bits(static_cast<std::size_t>(state.num_qubits), '0');
        for (int q = 0; q < state.num_qubits; ++q)
            if ((indices[k] >> q) & 1) bits[static_cast<std::size_t>(q)] = '1';
        out[bits] += counts[k];
    }
    return out;
}

double sampled_marginal(const QuantumState& state, int qubit, long shots, std::uint64_t seed) {
    const auto counts = sample_bitstrings(state, shots, seed);
    long ones = 0;
    for (const auto& [bits, c] : counts) {
        if (bits[static_cast<std::size_t>(qubit)] == '1') ones += c;
    }
    return static_cast<double>(ones) / static_cast<double>(shots);
}

CMatrix haar_random_unitary(int dim, Rng& rng) {
    if (dim < 2) throw std::invalid_argument("haar_random_unitary: dim must be >= 2");

    // Complex Ginibre matrix, row-major draw order.
    CMatrix g(dim, dim);
    for (int r = 0; r < dim; ++r)
        for (int c = 0; c < dim; ++c) g(r, c) = cdouble(rng.normal(), rng.normal()) * M_SQRT1_2;

    // Modified Gram-Schmidt over columns, run twice for orthogonality at the
    // 1e-14 level. Normalizing against the real positive column norms is the
    // positive-diagonal QR convention, so Q itself is Haar distributed.
    for (int pass = 0; pass < 2; ++pass) {
        for (int c = 0; c < dim; ++c) {
            for (int prev = 0; prev < c; ++prev) {
                cdouble dot = 0.0;
                for (int r = 0; r < dim; ++r) dot += std::conj(g(r, prev)) * g(r, c);
                for (int r = 0; r < dim; ++r) g(r, c) -= dot * g(r, prev);
            }
            double nrm = 0.0;
            for (int r = 0; r < dim; ++r) nrm += std::norm(g(r, c));
            nrm = std::sqrt(nrm);
            for (int r = 0; r < dim; ++r) g(r, c) /= nrm;
        }
    }
    return g;
}

CMatrix haar_random_unitary(int dim, std::uint64_t seed) {
    Rng rng(seed);
    return haar_random_unitary(dim, rng);
}

void dump_state_csv(const QuantumState& state, std::ostream& os) {
    os << "basis_index,re,im\n";
    for (std::size_t i = 0; i < state.dim(); ++i)
        os << i << ',' << state.amps[i].real() << ',' << state.amps[i].imag() << '\n';
}

}  // namespace qens::sim
