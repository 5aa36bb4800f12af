#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "qens/common.hpp"
#include "qens/data.hpp"
#include "qens/rng.hpp"
#include "qens/simulator.hpp"
#include "qens/variational.hpp"

using namespace qens;
using namespace qens::variational;

namespace {

LearnerParams zero_params(int n) {
    LearnerParams p;
    p.num_qubits = n;
    p.theta.assign(static_cast<std::size_t>(6 * n), 0.0);
    return p;
}

std::vector<double> random_features(int dim, Rng& rng) {
    std::vector<double> x(static_cast<std::size_t>(dim));
    double norm = 0.0;
    while (norm < 1e-6) {
        norm = 0.0;
        for (double& v : x) {
            v = rng.uniform(-1.0, 1.0);
            norm += v * v;
        }
    }
    return x;
}

data::Dataset toy_dataset() {
    data::Dataset d(4, 2);
    const double rows[4][2] = {{1.0, 0.05}, {0.9, 0.1}, {0.05, 1.0}, {0.1, 0.9}};
    const int labels[4] = {0, 0, 1, 1};
    for (int i = 0; i < 4; ++i) {
        d.at(i, 0) = rows[i][0];
        d.at(i, 1) = rows[i][1];
        d.set_label(i, labels[i]);
    }
    return d;
}

}  // namespace

TEST_SUITE("variational") {

TEST_CASE("parameter layout follows the documented gate order") {
    CHECK(learner_qubits(1) == 1);
    CHECK(learner_qubits(2) == 1);
    CHECK(learner_qubits(3) == 2);
    CHECK(learner_qubits(4) == 2);
    CHECK(learner_qubits(5) == 3);
    CHECK(learner_qubits(8) == 3);
    CHECK_THROWS_AS(learner_qubits(0), ConfigError);

    const int n = 3;
    LearnerParams params = zero_params(n);
    CHECK(params.param_count() == 18);
    for (std::size_t j = 0; j < params.theta.size(); ++j) {
        params.theta[j] = 0.01 * static_cast<double>(j + 1);
    }
    const std::vector<double> x = {1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    const sim::Circuit circuit = build_learner_circuit(x, params);
    REQUIRE(circuit.gates.size() == 1 + 6 * n + (n - 1));
    CHECK(std::string(circuit.gates[0].name()) == "unitary");
    // Layer 1: per qubit RZ, RY, RZ with consecutive parameter indices.
    std::size_t g = 1;
    for (int layer = 0; layer < 2; ++layer) {
        if (layer == 1) {
            for (int q = 0; q + 1 < n; ++q, ++g) {
                CHECK(std::string(circuit.gates[g].name()) == "cnot");
                CHECK(circuit.gates[g].controls == std::vector<int>{q});
                CHECK(circuit.gates[g].targets == std::vector<int>{q + 1});
            }
        }
        for (int q = 0; q < n; ++q) {
            const char* names[3] = {"rz", "ry", "rz"};
            for (int slot = 0; slot < 3; ++slot, ++g) {
                CHECK(std::string(circuit.gates[g].name()) == names[slot]);
                CHECK(circuit.gates[g].targets == std::vector<int>{q});
                const int idx = layer * 3 * n + q * 3 + slot;
                CHECK(circuit.gates[g].angle == doctest::Approx(0.01 * (idx + 1)).epsilon(1e-15));
            }
        }
    }
}

TEST_CASE("zero angles read out the encoded state") {
    const LearnerParams params = zero_params(1);
    CHECK(predict_proba(std::vector<double>{1.0, 0.0}, params) == doctest::Approx(0.0));
    CHECK(predict_proba(std::vector<double>{0.0, 1.0}, params) == doctest::Approx(1.0));
}

TEST_CASE("ry pi on qubit 0 flips the readout") {
    LearnerParams params = zero_params(1);
    params.theta[1] = M_PI;  // layer 1, qubit 0, RY
    CHECK(predict_proba(std::vector<double>{1.0, 0.0}, params) == doctest::Approx(1.0));
}

TEST_CASE("fast path matches both the simulator and the dense matrix oracle") {
    Rng rng(401);
    for (int n = 1; n <= 3; ++n) {
        for (int rep = 0; rep < 12; ++rep) {
            LearnerParams params = LearnerParams::random_init(n, rng.uniform_int(1 << 30));
            const std::vector<double> x = random_features(1 << n, rng);
            const double fast = predict_proba(x, params);

            const sim::Circuit circuit = build_learner_circuit(x, params);
            const sim::QuantumState out =
                sim::run_circuit(circuit, sim::QuantumState::zero(n));
            CHECK(fast == doctest::Approx(oracle::marginal_bruteforce(out, 0)).epsilon(1e-12));

            const CMatrix u = oracle::circuit_matrix(circuit);
            std::vector<cdouble> e0(out.dim());
            e0[0] = 1.0;
            const std::vector<cdouble> dense = u * e0;
            double p1 = 0.0;
            for (std::size_t i = 1; i < dense.size(); i += 2) p1 += std::norm(dense[i]);
            CHECK(fast == doctest::Approx(p1).epsilon(1e-12));

            CHECK(predict_proba(x, params, true) == doctest::Approx(1.0 - fast).epsilon(1e-12));
        }
    }
}

TEST_CASE("bce loss values and clamping") {
    CHECK(bce_loss({0.5}, {0}) == doctest::Approx(std::log(2.0)));
    CHECK(bce_loss({0.5}, {1}) == doctest::Approx(std::log(2.0)));
    CHECK(bce_loss({1.0}, {1}) == doctest::Approx(0.0).epsilon(1e-9));
    // Fully confident and wrong: clamped to -ln(1e-12), finite.
    CHECK(bce_loss({0.0}, {1}) == doctest::Approx(-std::log(1e-12)));
    CHECK(bce_loss({1.0}, {0}) == doctest::Approx(-std::log(1e-12)));
    CHECK(bce_loss({0.9, 0.2}, {1, 0}) ==
          doctest::Approx(0.5 * (-std::log(0.9) - std::log(0.8))));

    // Weight normalization: zero weights drop samples entirely.
    CHECK(weighted_bce_loss({0.9, 0.2}, {1, 0}, {2.0, 0.0}) ==
          doctest::Approx(-std::log(0.9)));
    CHECK(weighted_bce_loss({0.9}, {1}, {0.0}) == 0.0);
    CHECK_THROWS(bce_loss({0.5}, {0, 1}));
    CHECK_THROWS(weighted_bce_loss({0.5}, {0}, {1.0, 2.0}));
}

TEST_CASE("parameter shift gradient matches central finite differences") {
    Rng rng(402);
    for (int n = 1; n <= 2; ++n) {
        int checked = 0;
        while (checked < 6) {
            const LearnerParams params = LearnerParams::random_init(n, rng.uniform_int(1 << 30));
            const std::vector<double> x = random_features(1 << n, rng);
            const int y = rng.uniform_int(2);
            const double p = predict_proba(x, params);
            // Keep the finite-difference oracle well conditioned.
            if (p < 1e-3 || p > 1.0 - 1e-3) continue;
            ++checked;

            const auto grad = parameter_shift_gradient({x}, {y}, params);
            const auto fd = oracle::finite_difference_gradient(
                [&](const std::vector<double>& theta) {
                    LearnerParams shifted = params;
                    shifted.theta = theta;
                    return bce_loss({predict_proba(x, shifted)}, {y});
                },
                params.theta, 1e-5);
            REQUIRE(grad.size() == fd.size());
            for (std::size_t j = 0; j < grad.size(); ++j) {
                CHECK(grad[j] == doctest::Approx(fd[j]).epsilon(1e-5).scale(1.0));
            }
        }
    }
}

TEST_CASE("batch gradient is the weighted mean of per-sample gradients") {
    Rng rng(403);
    const LearnerParams params = LearnerParams::random_init(2, 77);
    std::vector<std::vector<double>> xs;
    std::vector<int> ys;
    for (int i = 0; i < 3; ++i) {
        xs.push_back(random_features(4, rng));
        ys.push_back(rng.uniform_int(2));
    }
    const std::vector<double> w = {0.5, 0.0, 2.0};
    const auto batch = parameter_shift_gradient(xs, ys, params, w);
    std::vector<double> expected(params.theta.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (w[i] == 0.0) continue;
        const auto gi = parameter_shift_gradient({xs[i]}, {ys[i]}, params);
        for (std::size_t j = 0; j < gi.size(); ++j) expected[j] += w[i] * gi[j];
        total += w[i];
    }
    for (std::size_t j = 0; j < batch.size(); ++j) {
        CHECK(batch[j] == doctest::Approx(expected[j] / total).epsilon(1e-12));
    }
}

TEST_CASE("terminal rz angles have vanishing gradient") {
    Rng rng(404);
    for (int n = 1; n <= 3; ++n) {
        const LearnerParams params = LearnerParams::random_init(n, rng.uniform_int(1 << 30));
        const std::vector<double> x = random_features(1 << n, rng);
        const auto grad = parameter_shift_gradient({x}, {1}, params);
        // The closing RZ of qubit 0 is diagonal and nothing follows it; only
        // phase-rounding noise survives.
        CHECK(std::abs(grad[static_cast<std::size_t>(3 * n + 2)]) < 1e-12);
    }
}

TEST_CASE("adam step matches the hand-rolled update") {
    LearnerParams params = zero_params(1);
    TrainConfig config;
    config.learning_rate = 0.01;
    AdamState state;

    const std::vector<double> g1 = {0.5, -0.2, 0.0, 1.5, -3.0, 0.25};
    adam_step(params, g1, state, config);
    for (std::size_t j = 0; j < g1.size(); ++j) {
        // t=1: m_hat = g, v_hat = g^2, step = -alpha g / (|g| + eps).
        const double expect =
            g1[j] == 0.0 ? 0.0 : -0.01 * g1[j] / (std::abs(g1[j]) + 1e-8);
        CHECK(params.theta[j] == doctest::Approx(expect).epsilon(1e-12));
    }

    // Second step against an independent reimplementation.
    std::vector<double> m(6, 0.0), v(6, 0.0), theta_ref(6);
    for (std::size_t j = 0; j < 6; ++j) {
        m[j] = 0.1 * g1[j];
        v[j] = 0.001 * g1[j] * g1[j];
        theta_ref[j] = params.theta[j];
    }
    const std::vector<double> g2 = {-0.4, 0.1, 0.2, 0.0, 2.0, -1.0};
    adam_step(params, g2, state, config);
    for (std::size_t j = 0; j < 6; ++j) {
        m[j] = 0.9 * m[j] + 0.1 * g2[j];
        v[j] = 0.999 * v[j] + 0.001 * g2[j] * g2[j];
        const double m_hat = m[j] / (1.0 - 0.9 * 0.9);
        const double v_hat = v[j] / (1.0 - 0.999 * 0.999);
        theta_ref[j] -= 0.01 * m_hat / (std::sqrt(v_hat) + 1e-8);
        CHECK(params.theta[j] == doctest::Approx(theta_ref[j]).epsilon(1e-12));
    }
    CHECK(state.t == 2);
}

TEST_CASE("delta weights reproduce single-sample training exactly") {
    const data::Dataset d = toy_dataset();
    const data::DatasetView full = data::DatasetView::all(d);
    const data::DatasetView single = full.select({2});

    TrainConfig weighted_config;
    weighted_config.learning_rate = 0.05;
    weighted_config.batch_size = 4;  // one batch per epoch
    weighted_config.epochs = 12;
    weighted_config.seed = 9;
    const std::vector<double> weights = {0.0, 0.0, 1.0, 0.0};
    const TrainResult a = train_learner(full, &weights, weighted_config, 1234);

    TrainConfig single_config = weighted_config;
    single_config.batch_size = 1;
    const TrainResult b = train_learner(single, nullptr, single_config, 1234);

    REQUIRE(a.params.theta.size() == b.params.theta.size());
    for (std::size_t j = 0; j < a.params.theta.size(); ++j) {
        CHECK(a.params.theta[j] == b.params.theta[j]);
    }
    REQUIRE(a.loss_history.size() == b.loss_history.size());
    for (std::size_t e = 0; e < a.loss_history.size(); ++e) {
        CHECK(a.loss_history[e] == b.loss_history[e]);
    }
}

TEST_CASE("training separates a separable toy set") {
    const data::Dataset d = toy_dataset();
    const data::DatasetView view = data::DatasetView::all(d);
    TrainConfig config;
    config.learning_rate = 0.1;
    config.batch_size = 2;
    config.epochs = 40;
    config.seed = 5;
    const TrainResult result = train_learner(view, nullptr, config, 31);
    REQUIRE(result.loss_history.size() == 40);
    CHECK(result.loss_history.back() < result.loss_history.front());
    for (int i = 0; i < view.size(); ++i) {
        const double p = predict_proba(view.row(i), result.params);
        CHECK((p >= 0.5 ? 1 : 0) == view.label(i));
    }

    // The inverted class map trains just as well through the same plumbing.
    TrainConfig inv = config;
    inv.invert_class_map = true;
    const TrainResult flipped = train_learner(view, nullptr, inv, 31);
    for (int i = 0; i < view.size(); ++i) {
        const double p = predict_proba(view.row(i), flipped.params, true);
        CHECK((p >= 0.5 ? 1 : 0) == view.label(i));
    }
}

TEST_CASE("deterministic for a fixed seed pair") {
    const data::Dataset d = toy_dataset();
    const data::DatasetView view = data::DatasetView::all(d);
    TrainConfig config;
    config.epochs = 5;
    config.batch_size = 2;
    config.seed = 11;
    const TrainResult a = train_learner(view, nullptr, config, 21);
    const TrainResult b = train_learner(view, nullptr, config, 21);
    CHECK(a.params.theta == b.params.theta);
    CHECK(a.loss_history == b.loss_history);

    const LearnerParams p1 = LearnerParams::random_init(2, 400);
    const LearnerParams p2 = LearnerParams::random_init(2, 400);
    const LearnerParams p3 = LearnerParams::random_init(2, 401);
    CHECK(p1.theta == p2.theta);
    CHECK(p1.theta != p3.theta);
    for (double t : p1.theta) {
        CHECK(t >= -M_PI);
        CHECK(t <= M_PI);
    }
}

TEST_CASE("learner record round trip") {
    const LearnerParams params = LearnerParams::random_init(3, 777);
    const std::string record = serialize_learner(params);
    const LearnerParams back = parse_learner(record);
    CHECK(back.num_qubits == 3);
    CHECK(back.seed == 777);
    REQUIRE(back.theta.size() == params.theta.size());
    for (std::size_t j = 0; j < params.theta.size(); ++j) {
        CHECK(back.theta[j] == params.theta[j]);
    }

    std::size_t commas = 0;
    for (char c : record) commas += c == ',' ? 1 : 0;
    CHECK(commas == 1 + 18);

    CHECK_THROWS_AS(parse_learner("3"), DataError);
    CHECK_THROWS_AS(parse_learner("1,0,0.1,0.2"), DataError);
    CHECK_THROWS_AS(parse_learner("1,0,a,b,c,d,e,f"), DataError);
}

TEST_CASE("configuration validation") {
    const data::Dataset d = toy_dataset();
    const data::DatasetView view = data::DatasetView::all(d);
    TrainConfig config;
    config.epochs = 1;

    TrainConfig bad = config;
    bad.batch_size = 0;
    CHECK_THROWS_AS(train_learner(view, nullptr, bad, 1), ConfigError);
    bad.batch_size = 5;  // > 4 samples
    CHECK_THROWS_AS(train_learner(view, nullptr, bad, 1), ConfigError);
    bad = config;
    bad.epochs = 0;
    CHECK_THROWS_AS(train_learner(view, nullptr, bad, 1), ConfigError);
    bad = config;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(train_learner(view, nullptr, bad, 1), ConfigError);

    const std::vector<double> short_weights = {1.0};
    CHECK_THROWS_AS(train_learner(view, &short_weights, config, 1), ConfigError);

    LearnerParams mismatched = zero_params(2);
    mismatched.theta.pop_back();
    CHECK_THROWS_AS(predict_proba(std::vector<double>{1.0, 0.0, 0.0, 0.0}, mismatched),
                    ConfigError);
    CHECK_THROWS_AS(LearnerParams::random_init(0, 1), ConfigError);
}

TEST_CASE("shot readout tracks the exact probability") {
    const LearnerParams params = LearnerParams::random_init(1, 52);
    const std::vector<double> x = {3.0, 4.0};
    const double exact = predict_proba(x, params);
    const long shots = 20000;
    const double sampled = predict_proba_shots(x, params, shots, 99);
    const double sigma = std::sqrt(exact * (1.0 - exact) / static_cast<double>(shots));
    CHECK(std::abs(sampled - exact) <= 4.0 * sigma + 1e-12);
    CHECK(predict_proba_shots(x, params, shots, 99) == sampled);
    CHECK(predict_proba_shots(x, params, shots, 100, true) ==
          doctest::Approx(1.0 - predict_proba_shots(x, params, shots, 100)).epsilon(1e-12));
}

}  // TEST_SUITE
