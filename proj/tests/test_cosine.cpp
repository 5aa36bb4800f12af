#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "qens/common.hpp"
#include "qens/cosine.hpp"
#include "qens/data.hpp"

using namespace qens;
using namespace qens::cosine;
using sim::Circuit;
using sim::Gate;
using sim::QuantumState;

namespace {

std::vector<double> random_vector(Rng& rng, int len) {
    std::vector<double> v(static_cast<std::size_t>(len));
    double norm = 0.0;
    while (norm < 1e-6) {
        norm = 0.0;
        for (double& x : v) {
            x = rng.uniform(-1.0, 1.0);
            norm += x * x;
        }
    }
    return v;
}

std::vector<Sample> random_samples(Rng& rng, int count, int len) {
    std::vector<Sample> out;
    for (int i = 0; i < count; ++i) out.push_back({random_vector(rng, len), rng.uniform_int(2)});
    return out;
}

double circuit_readout(const Circuit& c) {
    const QuantumState s = sim::run_circuit(c, QuantumState::zero(c.num_qubits));
    return sim::marginal_probability(s, c.num_qubits - 1);
}

}  // namespace

TEST_SUITE_BEGIN("cosine");

TEST_CASE("closed form hits the hand examples") {
    const std::vector<double> a = {1.0, 0.0};
    const std::vector<double> b = {1.0, 1.0};
    CHECK(qcc_oracle(a, 1, a) == doctest::Approx(1.0));
    const std::vector<double> e1 = {0.0, 1.0};
    CHECK(qcc_oracle(a, 1, e1) == doctest::Approx(0.5));
    CHECK(qcc_oracle(a, 0, b) == doctest::Approx(0.25));

    const std::vector<double> zero = {0.0, 0.0};
    CHECK_THROWS_AS(qcc_oracle(zero, 1, a), std::invalid_argument);

    // Class-conditional bounds forced by the closed form.
    Rng rng(40);
    for (int i = 0; i < 50; ++i) {
        const auto x = random_vector(rng, 4);
        const auto t = random_vector(rng, 4);
        const double p0 = qcc_oracle(x, 0, t);
        const double p1 = qcc_oracle(x, 1, t);
        CHECK(p0 >= 0.0);
        CHECK(p0 <= 0.5);
        CHECK(p1 >= 0.5);
        CHECK(p1 <= 1.0);
        CHECK(p0 + p1 == doctest::Approx(1.0));
    }
}

TEST_CASE("qcc circuit widths match the feature count") {
    Rng rng(41);
    const auto t2 = random_vector(rng, 2);
    const auto s2 = random_vector(rng, 2);
    CHECK(build_qcc_circuit(t2, 0, s2, 1).num_qubits == 4);
    const auto t8 = random_vector(rng, 8);
    const auto s8 = random_vector(rng, 8);
    CHECK(build_qcc_circuit(t8, 1, s8, 3).num_qubits == 8);
}

TEST_CASE("qcc circuit readout equals the closed form") {
    Rng rng(42);
    for (const int q_f : {1, 2, 3}) {
        const int len = 1 << q_f;
        for (int rep = 0; rep < 40; ++rep) {
            const auto train = random_vector(rng, len);
            const auto test = random_vector(rng, len);
            const int y = rng.uniform_int(2);
            const Circuit c = build_qcc_circuit(train, y, test, q_f);
            REQUIRE(circuit_readout(c) == doctest::Approx(qcc_oracle(train, y, test)).epsilon(1e-9));
        }
    }
}

TEST_CASE("swap schedule branches are bijections with identity at branch 0") {
    CosineConfig config;
    config.d = 3;
    config.n_train = 4;
    config.n_swap = 2;
    config.n_feature = 2;
    config.seed = 5;
    const BranchSelection sel = swap_schedule(config);
    CHECK(sel.swap_pairs.size() == 6);
    for (const auto& [a, b] : sel.swap_pairs) {
        CHECK(a != b);
        CHECK(a >= 0);
        CHECK(a < 4);
        CHECK(b >= 0);
        CHECK(b < 4);
    }
    for (int branch = 0; branch < sel.num_branches(); ++branch) {
        const auto perm = sel.permutation(branch);
        std::set<int> seen(perm.begin(), perm.end());
        CHECK(seen.size() == perm.size());
    }
    const auto identity = sel.permutation(0);
    for (int r = 0; r < 4; ++r) CHECK(identity[static_cast<std::size_t>(r)] == r);
}

TEST_CASE("qec qubit accounting") {
    CosineConfig c7;
    c7.d = 1;
    c7.n_train = 2;
    c7.n_swap = 1;
    c7.n_feature = 2;
    CHECK(c7.qec_qubit_count() == 7);

    CosineConfig c16;
    c16.d = 1;
    c16.n_train = 4;
    c16.n_swap = 1;
    c16.n_feature = 4;
    CHECK(c16.qec_qubit_count() == 16);

    CosineConfig c56;
    c56.d = 2;
    c56.n_train = 8;
    c56.n_swap = 1;
    c56.n_feature = 32;
    CHECK(c56.qec_qubit_count() == 56);
}

TEST_CASE("qec circuit width obeys the formula and the cap") {
    Rng rng(43);
    CosineConfig config;
    config.d = 1;
    config.n_train = 2;
    config.n_swap = 1;
    config.n_feature = 2;
    config.seed = 9;
    const auto train = random_samples(rng, 2, 2);
    const auto test = random_vector(rng, 2);
    const auto built = build_qec_circuit(config, train, test);
    CHECK(built.circuit.num_qubits == 7);

    CosineConfig big;
    big.d = 2;
    big.n_train = 8;
    big.n_swap = 1;
    big.n_feature = 32;
    const auto train8 = random_samples(rng, 8, 32);
    const auto test32 = random_vector(rng, 32);
    CHECK_THROWS_WITH_AS(build_qec_circuit(big, train8, test32), doctest::Contains("26"),
                         ResourceError);
}

TEST_CASE("qec oracle degenerates to qcc at d=0 and on identical samples") {
    Rng rng(44);
    CosineConfig config;
    config.d = 0;
    config.n_train = 1;
    config.n_feature = 4;
    const auto train = random_samples(rng, 1, 4);
    const auto test = random_vector(rng, 4);
    CHECK(qec_oracle(config, train, test) ==
          doctest::Approx(qcc_oracle(train[0].x, train[0].y, test)));

    CosineConfig dup;
    dup.d = 2;
    dup.n_train = 3;
    dup.n_swap = 2;
    dup.n_feature = 4;
    dup.seed = 77;
    const Sample s = {random_vector(rng, 4), 1};
    const std::vector<Sample> same = {s, s, s};
    CHECK(qec_oracle(dup, same, test) == doctest::Approx(qcc_oracle(s.x, s.y, test)));
}

TEST_CASE("qec circuit readout equals the branch-enumeration oracle") {
    Rng rng(45);
    CosineConfig config;
    config.d = 2;
    config.n_train = 4;
    config.n_swap = 1;
    config.n_feature = 2;
    config.seed = 13;
    for (int rep = 0; rep < 10; ++rep) {
        const auto train = random_samples(rng, 4, 2);
        const auto test = random_vector(rng, 2);
        const auto built = build_qec_circuit(config, train, test);
        const double circuit_p = circuit_readout(built.circuit);
        const double oracle_p = qec_oracle(config, train, test);
        REQUIRE(circuit_p == doctest::Approx(oracle_p).epsilon(1e-9));
    }
}

TEST_CASE("control branches keep norm 2^(-d/2) after the permutation layer") {
    Rng rng(46);
    CosineConfig config;
    config.d = 2;
    config.n_train = 3;
    config.n_swap = 2;
    config.n_feature = 2;
    config.seed = 21;
    const auto train = random_samples(rng, 3, 2);
    const auto test = random_vector(rng, 2);
    const auto built = build_qec_circuit(config, train, test);

    // Truncate the circuit right before the swap-test block: it starts at the
    // first H on the ancilla, which is the last H in the gate list.
    Circuit head = built.circuit;
    int last_h = -1;
    for (std::size_t g = 0; g < head.gates.size(); ++g)
        if (head.gates[g].kind == Gate::Kind::H) last_h = static_cast<int>(g);
    REQUIRE(last_h >= 0);
    head.gates.resize(static_cast<std::size_t>(last_h));

    const QuantumState s = sim::run_circuit(head, QuantumState::zero(head.num_qubits));
    for (int branch = 0; branch < 4; ++branch) {
        double norm_sq = 0.0;
        for (std::size_t i = 0; i < s.dim(); ++i)
            if ((i & 3) == static_cast<std::size_t>(branch)) norm_sq += std::norm(s.amps[i]);
        REQUIRE(std::abs(std::sqrt(norm_sq) - 0.5) < 1e-10);
    }
}

TEST_CASE("qecru identity blocks reproduce the plain qcc value") {
    Rng rng(47);
    CosineConfig config;
    config.d = 1;
    config.n_train = 2;
    config.n_swap = 1;
    config.n_feature = 2;
    config.seed = 31;
    const auto train = random_samples(rng, 2, 2);
    const auto test = random_vector(rng, 2);

    std::vector<QecruBlock> identity_blocks(1);
    identity_blocks[0].target_register = 1;
    identity_blocks[0].unitary = CMatrix::identity(4);
    const Circuit c = build_qecru_circuit(config, train, test, identity_blocks);
    CHECK(circuit_readout(c) == doctest::Approx(qcc_oracle(train[0].x, train[0].y, test)).epsilon(1e-9));
}

TEST_CASE("qecru is deterministic for a fixed seed") {
    Rng rng(48);
    CosineConfig config;
    config.d = 2;
    config.n_train = 2;
    config.n_swap = 1;
    config.n_feature = 2;
    config.seed = 55;
    const auto train = random_samples(rng, 2, 2);
    const auto test = random_vector(rng, 2);
    const Circuit a = build_qecru_circuit(config, train, test);
    const Circuit b = build_qecru_circuit(config, train, test);
    REQUIRE(a.gates.size() == b.gates.size());
    CHECK(circuit_readout(a) == circuit_readout(b));
}

TEST_CASE("qecru output equals its two-branch decomposition") {
    Rng rng(49);
    CosineConfig config;
    config.d = 1;
    config.n_train = 2;
    config.n_swap = 1;
    config.n_feature = 2;
    config.seed = 61;
    const auto train = random_samples(rng, 2, 2);
    const auto test = random_vector(rng, 2);

    const auto blocks = qecru_schedule(config);
    REQUIRE(blocks.size() == 1);

    // Identity branch: plain swap test against sample 0.
    const double p_identity = qcc_oracle(train[0].x, train[0].y, test);

    // Rotated branch: the same circuit with the block applied unconditionally.
    const int q_f = 1;
    Circuit rotated(config.qec_qubit_count() - 1, "rotated-branch");
    // Layout without the control qubit: registers shift down by one.
    const auto base = [&](int r) { return r * (q_f + 1); };
    for (int r = 0; r < 2; ++r) {
        rotated.add(Gate::unitary({base(r)}, sim::state_prep_unitary(train[static_cast<std::size_t>(r)].x, q_f)));
        if (train[static_cast<std::size_t>(r)].y == 1) rotated.add(Gate::ry(base(r) + q_f, M_PI));
    }
    const int test_base = 2 * (q_f + 1);
    const int ancilla = test_base + q_f;
    rotated.add(Gate::unitary({test_base}, sim::state_prep_unitary(test, q_f)));
    const int tgt = base(blocks[0].target_register);
    rotated.add(Gate::unitary({tgt, tgt + 1}, blocks[0].unitary));
    rotated.add(Gate::h(ancilla));
    rotated.add(Gate::cswap(ancilla, 0, test_base));
    rotated.add(Gate::h(ancilla));
    rotated.add(Gate::cnot(q_f, ancilla));
    const double p_rotated = circuit_readout(rotated);

    const Circuit full = build_qecru_circuit(config, train, test);
    CHECK(circuit_readout(full) == doctest::Approx((p_identity + p_rotated) / 2.0).epsilon(1e-9));
}

TEST_CASE("prediction selects the matching training sample for itself") {
    data::Dataset d(2, 2);
    d.at(0, 0) = 0.8;
    d.at(0, 1) = 0.2;
    d.set_label(0, 1);
    d.at(1, 0) = 0.8;
    d.at(1, 1) = 0.2;
    d.set_label(1, 1);

    CosineConfig config;
    config.d = 0;
    config.n_train = 1;
    config.n_feature = 2;
    config.seed = 3;
    data::DatasetView pool = data::DatasetView::all(d);
    const auto probs = cosine_predict(CosineKind::qcc, config, pool, pool);
    REQUIRE(probs.size() == 2);
    for (const double p : probs) CHECK(p == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("exact and shot modes agree within the binomial bound") {
    Rng rng(50);
    data::Dataset d(6, 2);
    for (int r = 0; r < 6; ++r) {
        d.at(r, 0) = rng.uniform(0.1, 1.0);
        d.at(r, 1) = rng.uniform(0.1, 1.0);
        d.set_label(r, r % 2);
    }
    CosineConfig config;
    config.d = 1;
    config.n_train = 2;
    config.n_swap = 1;
    config.n_feature = 2;
    config.seed = 8;

    const data::DatasetView pool = data::DatasetView::all(d);
    data::DatasetView test;
    test.dataset = &d;
    test.indices = {0, 3};

    const auto exact = cosine_predict(CosineKind::qec, config, pool, test);
    EvalOptions shot_opts;
    shot_opts.mode = EvalMode::shots;
    shot_opts.shots = 8192;
    shot_opts.shot_seed = 17;
    const auto shots = cosine_predict(CosineKind::qec, config, pool, test, shot_opts);
    for (std::size_t i = 0; i < exact.size(); ++i) {
        const double sigma = std::sqrt(exact[i] * (1.0 - exact[i]) / 8192.0);
        CHECK(std::abs(shots[i] - exact[i]) <= 4.0 * sigma + 1e-12);
    }
}

TEST_CASE("trace rows enumerate branches whose mean is the prediction") {
    Rng rng(51);
    data::Dataset d(4, 2);
    for (int r = 0; r < 4; ++r) {
        d.at(r, 0) = rng.uniform(0.1, 1.0);
        d.at(r, 1) = rng.uniform(0.1, 1.0);
        d.set_label(r, r % 2);
    }
    CosineConfig config;
    config.d = 2;
    config.n_train = 3;
    config.n_swap = 1;
    config.n_feature = 2;
    config.seed = 14;

    const data::DatasetView pool = data::DatasetView::all(d);
    data::DatasetView test;
    test.dataset = &d;
    test.indices = {1};

    std::ostringstream trace;
    EvalOptions opts;
    opts.trace = &trace;
    const auto probs = cosine_predict(CosineKind::qec, config, pool, test, opts);

    std::istringstream in(trace.str());
    std::string header;
    std::getline(in, header);
    CHECK(header == "test_index,branch,probability");
    double sum = 0.0;
    int rows = 0;
    std::string line;
    while (std::getline(in, line)) {
        const auto last_comma = line.rfind(',');
        sum += std::stod(line.substr(last_comma + 1));
        ++rows;
    }
    CHECK(rows == 4);
    CHECK(sum / 4.0 == doctest::Approx(probs[0]).epsilon(1e-9));
}

TEST_CASE("pool smaller than the subset is rejected") {
    data::Dataset d(1, 2);
    d.at(0, 0) = 1.0;
    d.at(0, 1) = 0.5;
    CosineConfig config;
    config.d = 1;
    config.n_train = 2;
    config.n_swap = 1;
    config.n_feature = 2;
    const data::DatasetView pool = data::DatasetView::all(d);
    CHECK_THROWS_AS(cosine_predict(CosineKind::qec, config, pool, pool), ConfigError);
}

TEST_SUITE_END();
