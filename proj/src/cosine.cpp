#include "qens/cosine.hpp"

#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "qens/common.hpp"
#include "qens/rng.hpp"

namespace qens::cosine {

using sim::Circuit;
using sim::Gate;
using sim::QuantumState;

namespace {

bool is_power_of_two(int v) { return v >= 1 && (v & (v - 1)) == 0; }

int int_log2(int v) {
    int q = 0;
    while ((1 << q) < v) ++q;
    return q;
}

void check_cap(int qubits, const std::string& what) {
    const int cap = sim::max_qubits();
    if (qubits > cap) {
        std::ostringstream msg;
        msg << what << ": needs " << qubits << " qubits, exceeding the simulator cap of " << cap
            << " qubits (override with QENS_MAX_QUBITS)";
        throw ResourceError(msg.str());
    }
}

double cosine_of(std::span<const double> a, std::span<const double> b) {
    double na = 0.0, nb = 0.0, dot = 0.0;
    for (const double v : a) na += v * v;
    for (const double v : b) nb += v * v;
    if (na <= 0.0 || nb <= 0.0) throw std::invalid_argument("qcc_oracle: zero-norm vector");
    const std::size_t common = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < common; ++i) dot += a[i] * b[i];
    return dot / std::sqrt(na * nb);
}

/// Encode one sample into a (features, label) register starting at `base`.
void add_register_prep(Circuit& c, int base, int q_f, std::span<const double> x, int y) {
    std::vector<int> targets(static_cast<std::size_t>(q_f));
    std::iota(targets.begin(), targets.end(), base);
    c.add(Gate::unitary(std::move(targets), sim::state_prep_unitary(x, q_f)));
    if (y == 1) c.add(Gate::ry(base + q_f, M_PI));
}

void add_test_prep(Circuit& c, int base, int q_f, std::span<const double> x) {
    std::vector<int> targets(static_cast<std::size_t>(q_f));
    std::iota(targets.begin(), targets.end(), base);
    c.add(Gate::unitary(std::move(targets), sim::state_prep_unitary(x, q_f)));
}

/// Swap-test block against the training register at `train_base` whose label
/// sits at train_base + q_f.
void add_swap_test(Circuit& c, int train_base, int test_base, int ancilla, int q_f) {
    c.add(Gate::h(ancilla));
    for (int j = 0; j < q_f; ++j) c.add(Gate::cswap(ancilla, train_base + j, test_base + j));
    c.add(Gate::h(ancilla));
    c.add(Gate::cnot(train_base + q_f, ancilla));
}

struct QecLayout {
    int q_f;
    int register_base(int d, int r) const { return d + r * (q_f + 1); }
    int label_of(int d, int r) const { return register_base(d, r) + q_f; }
    int test_base(int d, int n_train) const { return d + n_train * (q_f + 1); }
    int ancilla(int d, int n_train) const { return test_base(d, n_train) + q_f; }
};

/// Shared QEC/QECRU skeleton: register prep, test prep, control H layer.
Circuit qec_skeleton(const CosineConfig& config, const std::vector<Sample>& train_set,
                     std::span<const double> test_x, const char* name) {
    config.validate();
    if (static_cast<int>(train_set.size()) != config.n_train)
        throw ConfigError(std::string(name) + ": train_set size != n_train");
    if (config.d >= 1 && config.n_train < 2)
        throw ConfigError(std::string(name) + ": register permutation needs n_train >= 2");
    check_cap(config.qec_qubit_count(), name);

    const QecLayout lay{config.q_f()};
    Circuit c(config.qec_qubit_count(), name);
    for (int r = 0; r < config.n_train; ++r)
        add_register_prep(c, lay.register_base(config.d, r), lay.q_f,
                          train_set[static_cast<std::size_t>(r)].x,
                          train_set[static_cast<std::size_t>(r)].y);
    add_test_prep(c, lay.test_base(config.d, config.n_train), lay.q_f, test_x);
    for (int k = 0; k < config.d; ++k) c.add(Gate::h(k));
    return c;
}

}  // namespace

int CosineConfig::q_f() const { return int_log2(n_feature); }

int CosineConfig::qec_qubit_count() const {
    return d + n_train * (q_f() + 1) + q_f() + 1;
}

void CosineConfig::validate() const {
    if (!is_power_of_two(n_feature) || n_feature < 2)
        throw ConfigError("cosine config: n_feature must be a power of two >= 2");
    if (d < 0) throw ConfigError("cosine config: d must be >= 0");
    if (n_train < 1) throw ConfigError("cosine config: n_train must be >= 1");
    if (d >= 1 && n_swap < 1) throw ConfigError("cosine config: n_swap must be >= 1 when d >= 1");
}

std::string CosineConfig::id() const {
    return "d" + std::to_string(d) + "_nt" + std::to_string(n_train) + "_ns" +
           std::to_string(n_swap) + "_nf" + std::to_string(n_feature);
}

double qcc_oracle(std::span<const double> train_x, int train_y, std::span<const double> test_x) {
    const double c = cosine_of(train_x, test_x);
    const double c2 = c * c;
    return train_y == 1 ? (1.0 + c2) / 2.0 : (1.0 - c2) / 2.0;
}

sim::Circuit build_qcc_circuit(std::span<const double> train_x, int train_y,
                               std::span<const double> test_x, int q_f) {
    if (q_f < 1) throw ConfigError("build_qcc_circuit: q_f must be >= 1");
    const int num_qubits = 2 * q_f + 2;
    check_cap(num_qubits, "build_qcc_circuit");

    Circuit c(num_qubits, "qcc");
    const int test_base = q_f + 1;
    const int ancilla = 2 * q_f + 1;
    add_register_prep(c, 0, q_f, train_x, train_y);
    add_test_prep(c, test_base, q_f, test_x);
    add_swap_test(c, 0, test_base, ancilla, q_f);
    return c;
}

std::vector<int> BranchSelection::permutation(int branch) const {
    std::vector<int> contents(static_cast<std::size_t>(n_train));
    std::iota(contents.begin(), contents.end(), 0);
    for (int k = 0; k < d; ++k) {
        if (!((branch >> k) & 1)) continue;
        for (int i = 0; i < n_swap; ++i) {
            const auto& [a, b] = swap_pairs[static_cast<std::size_t>(k * n_swap + i)];
            std::swap(contents[static_cast<std::size_t>(a)], contents[static_cast<std::size_t>(b)]);
        }
    }
    return contents;
}

int BranchSelection::register0_sample(int branch) const { return permutation(branch)[0]; }

BranchSelection swap_schedule(const CosineConfig& config) {
    config.validate();
    BranchSelection sel;
    sel.d = config.d;
    sel.n_train = config.n_train;
    sel.n_swap = config.n_swap;
    if (config.d == 0) return sel;
    if (config.n_train < 2)
        throw ConfigError("swap_schedule: register permutation needs n_train >= 2");

    Rng rng(config.seed);
    for (int k = 0; k < config.d; ++k) {
        for (int i = 0; i < config.n_swap; ++i) {
            const int a = rng.uniform_int(config.n_train);
            int b = rng.uniform_int(config.n_train - 1);
            if (b >= a) ++b;
            sel.swap_pairs.emplace_back(a, b);
        }
    }
    return sel;
}

QecCircuit build_qec_circuit(const CosineConfig& config, const std::vector<Sample>& train_set,
                             std::span<const double> test_x) {
    Circuit c = qec_skeleton(config, train_set, test_x, "qec");
    const QecLayout lay{config.q_f()};
    const BranchSelection sel = swap_schedule(config);

    for (int k = 0; k < config.d; ++k) {
        for (int i = 0; i < config.n_swap; ++i) {
            const auto& [a, b] = sel.swap_pairs[static_cast<std::size_t>(k * config.n_swap + i)];
            const int base_a = lay.register_base(config.d, a);
            const int base_b = lay.register_base(config.d, b);
            for (int j = 0; j < lay.q_f; ++j) c.add(Gate::cswap(k, base_a + j, base_b + j));
            c.add(Gate::cswap(k, lay.label_of(config.d, a), lay.label_of(config.d, b)));
        }
    }

    add_swap_test(c, lay.register_base(config.d, 0), lay.test_base(config.d, config.n_train),
                  lay.ancilla(config.d, config.n_train), lay.q_f);
    return {std::move(c), sel};
}

double qec_oracle(const CosineConfig& config, const std::vector<Sample>& train_set,
                  std::span<const double> test_x) {
    config.validate();
    if (static_cast<int>(train_set.size()) != config.n_train)
        throw ConfigError("qec_oracle: train_set size != n_train");
    if (config.d >= 1 && config.n_train < 2)
        throw ConfigError("qec_oracle: register permutation needs n_train >= 2");

    const BranchSelection sel = swap_schedule(config);
    double acc = 0.0;
    for (int b = 0; b < sel.num_branches(); ++b) {
        const Sample& s = train_set[static_cast<std::size_t>(sel.register0_sample(b))];
        acc += qcc_oracle(s.x, s.y, test_x);
    }
    return acc / static_cast<double>(sel.num_branches());
}

std::vector<QecruBlock> qecru_schedule(const CosineConfig& config) {
    config.validate();
    std::vector<QecruBlock> blocks;
    if (config.d == 0) return blocks;

    Rng rng(config.seed);
    const int dim = 1 << (config.q_f() + 1);
    for (int k = 0; k < config.d; ++k) {
        for (int i = 0; i < config.n_swap; ++i) {
            QecruBlock blk;
            blk.target_register = rng.uniform_int(config.n_train);
            blk.unitary = sim::haar_random_unitary(dim, rng);
            blocks.push_back(std::move(blk));
        }
    }
    return blocks;
}

sim::Circuit build_qecru_circuit(const CosineConfig& config, const std::vector<Sample>& train_set,
                                 std::span<const double> test_x,
                                 const std::vector<QecruBlock>& blocks) {
    Circuit c = qec_skeleton(config, train_set, test_x, "qecru");
    const QecLayout lay{config.q_f()};
    if (static_cast<int>(blocks.size()) != config.d * config.n_swap)
        throw ConfigError("build_qecru_circuit: expected d*n_swap unitary blocks");

    for (int k = 0; k < config.d; ++k) {
        for (int i = 0; i < config.n_swap; ++i) {
            const QecruBlock& blk = blocks[static_cast<std::size_t>(k * config.n_swap + i)];
            const int base = lay.register_base(config.d, blk.target_register);
            std::vector<int> targets(static_cast<std::size_t>(lay.q_f + 1));
            std::iota(targets.begin(), targets.end(), base);
            c.add(Gate::controlled_unitary({k}, std::move(targets), blk.unitary));
        }
    }

    add_swap_test(c, lay.register_base(config.d, 0), lay.test_base(config.d, config.n_train),
                  lay.ancilla(config.d, config.n_train), lay.q_f);
    return c;
}

sim::Circuit build_qecru_circuit(const CosineConfig& config, const std::vector<Sample>& train_set,
                                 std::span<const double> test_x) {
    return build_qecru_circuit(config, train_set, test_x, qecru_schedule(config));
}

double evaluate_readout(const sim::Circuit& circuit, int d, const EvalOptions& opts,
                        std::uint64_t shot_seed, std::vector<double>* branch_probs) {
    const int ancilla = circuit.num_qubits - 1;
    const QuantumState state = sim::run_circuit(circuit, QuantumState::zero(circuit.num_qubits));

    if (opts.mode == EvalMode::shots) return sim::sampled_marginal(state, ancilla, opts.shots, shot_seed);

    if (branch_probs != nullptr) {
        // Controls occupy qubits [0, d); every branch carries weight 2^-d.
        const std::size_t control_mask = (std::size_t{1} << d) - 1;
        const std::size_t anc_mask = std::size_t{1} << ancilla;
        branch_probs->assign(std::size_t{1} << d, 0.0);
        for (std::size_t i = 0; i < state.dim(); ++i) {
            if (i & anc_mask)
                (*branch_probs)[i & control_mask] += std::norm(state.amps[i]);
        }
        for (double& p : *branch_probs) p *= static_cast<double>(std::size_t{1} << d);
    }
    return sim::marginal_probability(state, ancilla);
}

std::vector<double> cosine_predict(CosineKind kind, const CosineConfig& config,
                                   const data::DatasetView& train_pool,
                                   const data::DatasetView& test, const EvalOptions& opts) {
    config.validate();
    const int subset = kind == CosineKind::qcc ? 1 : config.n_train;
    if (train_pool.size() < subset)
        throw ConfigError("cosine_predict: training pool smaller than n_train");
    if (train_pool.size() == 0 || test.size() == 0)
        throw ConfigError("cosine_predict: empty training pool or test set");

    if (opts.trace != nullptr) *opts.trace << "test_index,branch,probability\n";

    std::vector<double> probs;
    probs.reserve(static_cast<std::size_t>(test.size()));
    for (int ti = 0; ti < test.size(); ++ti) {
        Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(ti)));
        const std::vector<int> chosen = rng.sample_without_replacement(train_pool.size(), subset);
        std::vector<Sample> samples;
        samples.reserve(chosen.size());
        for (const int pos : chosen) {
            const auto row = train_pool.row(pos);
            samples.push_back({{row.begin(), row.end()}, train_pool.label(pos)});
        }
        const auto test_row = test.row(ti);
        const std::vector<double> test_x(test_row.begin(), test_row.end());

        sim::Circuit circuit;
        int d = 0;
        switch (kind) {
            case CosineKind::qcc:
                circuit = build_qcc_circuit(samples[0].x, samples[0].y, test_x, config.q_f());
                break;
            case CosineKind::qec: {
                circuit = build_qec_circuit(config, samples, test_x).circuit;
                d = config.d;
                break;
            }
            case CosineKind::qecru:
                circuit = build_qecru_circuit(config, samples, test_x);
                d = config.d;
                break;
        }

        std::vector<double> branch_probs;
        const bool want_branches = opts.trace != nullptr && opts.mode == EvalMode::exact;
        const double p =
            evaluate_readout(circuit, d, opts,
                             derive_seed(opts.shot_seed, static_cast<std::uint64_t>(ti)),
                             want_branches ? &branch_probs : nullptr);
        if (want_branches) {
            for (std::size_t b = 0; b < branch_probs.size(); ++b)
                *opts.trace << ti << ',' << b << ',' << format_double(branch_probs[b]) << '\n';
        }
        probs.push_back(p);
    }
    return probs;
}

}  // namespace qens::cosine
