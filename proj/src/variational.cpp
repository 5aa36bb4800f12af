#include "qens/variational.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <utility>

#include "qens/common.hpp"
#include "qens/rng.hpp"

namespace qens::variational {
namespace {

constexpr double kProbClamp = 1e-12;

double clamp_prob(double p) {
    if (p < kProbClamp) return kProbClamp;
    if (p > 1.0 - kProbClamp) return 1.0 - kProbClamp;
    return p;
}

void apply_rz(std::vector<cdouble>& amps, int qubit, double angle) {
    const cdouble lo = std::polar(1.0, -angle / 2.0);
    const cdouble hi = std::polar(1.0, angle / 2.0);
    const std::size_t bit = std::size_t{1} << qubit;
    for (std::size_t i = 0; i < amps.size(); ++i) amps[i] *= (i & bit) ? hi : lo;
}

void apply_ry(std::vector<cdouble>& amps, int qubit, double angle) {
    const double c = std::cos(angle / 2.0);
    const double s = std::sin(angle / 2.0);
    const std::size_t bit = std::size_t{1} << qubit;
    for (std::size_t i = 0; i < amps.size(); ++i) {
        if (i & bit) continue;
        const cdouble a0 = amps[i];
        const cdouble a1 = amps[i | bit];
        amps[i] = c * a0 - s * a1;
        amps[i | bit] = s * a0 + c * a1;
    }
}

void apply_cnot(std::vector<cdouble>& amps, int control, int target) {
    const std::size_t cb = std::size_t{1} << control;
    const std::size_t tb = std::size_t{1} << target;
    for (std::size_t i = 0; i < amps.size(); ++i) {
        if ((i & cb) && !(i & tb)) std::swap(amps[i], amps[i | tb]);
    }
}

void run_ansatz(std::vector<cdouble>& amps, int num_qubits, const std::vector<double>& theta) {
    const int stride = 3 * num_qubits;
    for (int q = 0; q < num_qubits; ++q) {
        apply_rz(amps, q, theta[3 * q]);
        apply_ry(amps, q, theta[3 * q + 1]);
        apply_rz(amps, q, theta[3 * q + 2]);
    }
    for (int q = 0; q + 1 < num_qubits; ++q) apply_cnot(amps, q, q + 1);
    for (int q = 0; q < num_qubits; ++q) {
        apply_rz(amps, q, theta[stride + 3 * q]);
        apply_ry(amps, q, theta[stride + 3 * q + 1]);
        apply_rz(amps, q, theta[stride + 3 * q + 2]);
    }
}

void check_params(const LearnerParams& params) {
    if (params.num_qubits < 1) {
        throw ConfigError("learner requires at least 1 qubit, got " +
                          std::to_string(params.num_qubits));
    }
    if (static_cast<int>(params.theta.size()) != params.param_count()) {
        throw ConfigError("learner with " + std::to_string(params.num_qubits) +
                          " qubits needs " + std::to_string(params.param_count()) +
                          " angles, got " + std::to_string(params.theta.size()));
    }
}

std::string format_17g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

LearnerParams LearnerParams::random_init(int num_qubits, std::uint64_t seed) {
    if (num_qubits < 1) {
        throw ConfigError("learner requires at least 1 qubit, got " + std::to_string(num_qubits));
    }
    LearnerParams params;
    params.num_qubits = num_qubits;
    params.seed = seed;
    Rng rng(seed);
    params.theta.resize(static_cast<std::size_t>(params.param_count()));
    for (double& t : params.theta) t = rng.uniform(-M_PI, M_PI);
    return params;
}

int learner_qubits(int num_features) {
    if (num_features < 1) {
        throw ConfigError("feature count must be positive, got " + std::to_string(num_features));
    }
    int n = 0;
    while ((1 << n) < num_features) ++n;
    return n < 1 ? 1 : n;
}

sim::Circuit build_learner_circuit(std::span<const double> x, const LearnerParams& params) {
    check_params(params);
    const int n = params.num_qubits;
    sim::Circuit circuit(n, "learner");
    std::vector<int> all(static_cast<std::size_t>(n));
    for (int q = 0; q < n; ++q) all[static_cast<std::size_t>(q)] = q;
    circuit.add(sim::Gate::unitary(all, sim::state_prep_unitary(x, n)));
    const int stride = 3 * n;
    for (int q = 0; q < n; ++q) {
        circuit.add(sim::Gate::rz(q, params.theta[3 * q]));
        circuit.add(sim::Gate::ry(q, params.theta[3 * q + 1]));
        circuit.add(sim::Gate::rz(q, params.theta[3 * q + 2]));
    }
    for (int q = 0; q + 1 < n; ++q) circuit.add(sim::Gate::cnot(q, q + 1));
    for (int q = 0; q < n; ++q) {
        circuit.add(sim::Gate::rz(q, params.theta[stride + 3 * q]));
        circuit.add(sim::Gate::ry(q, params.theta[stride + 3 * q + 1]));
        circuit.add(sim::Gate::rz(q, params.theta[stride + 3 * q + 2]));
    }
    return circuit;
}

LearnerEvaluator::LearnerEvaluator(std::span<const double> x, int num_qubits)
    : num_qubits_(num_qubits),
      encoded_(sim::amplitude_encode(x, num_qubits).amps),
      scratch_(encoded_.size()) {}

double LearnerEvaluator::probability(const std::vector<double>& theta,
                                     bool invert_class_map) const {
    if (static_cast<int>(theta.size()) != 6 * num_qubits_) {
        throw ConfigError("learner with " + std::to_string(num_qubits_) + " qubits needs " +
                          std::to_string(6 * num_qubits_) + " angles, got " +
                          std::to_string(theta.size()));
    }
    scratch_ = encoded_;
    run_ansatz(scratch_, num_qubits_, theta);
    double p1 = 0.0;
    for (std::size_t i = 1; i < scratch_.size(); i += 2) p1 += std::norm(scratch_[i]);
    return invert_class_map ? 1.0 - p1 : p1;
}

double predict_proba(std::span<const double> x, const LearnerParams& params,
                     bool invert_class_map) {
    check_params(params);
    return LearnerEvaluator(x, params.num_qubits).probability(params.theta, invert_class_map);
}

double predict_proba_shots(std::span<const double> x, const LearnerParams& params, long shots,
                           std::uint64_t seed, bool invert_class_map) {
    check_params(params);
    sim::QuantumState state = sim::amplitude_encode(x, params.num_qubits);
    run_ansatz(state.amps, params.num_qubits, params.theta);
    const double p1 = sim::sampled_marginal(state, 0, shots, seed);
    return invert_class_map ? 1.0 - p1 : p1;
}

double bce_loss(const std::vector<double>& probs, const std::vector<int>& labels) {
    return weighted_bce_loss(probs, labels, {});
}

double weighted_bce_loss(const std::vector<double>& probs, const std::vector<int>& labels,
                         const std::vector<double>& weights) {
    if (probs.size() != labels.size()) {
        throw std::invalid_argument("bce_loss: prob/label count mismatch");
    }
    if (!weights.empty() && weights.size() != probs.size()) {
        throw std::invalid_argument("bce_loss: weight count mismatch");
    }
    if (probs.empty()) return 0.0;
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = clamp_prob(probs[i]);
        const double loss = labels[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
        const double w = weights.empty() ? 1.0 : weights[i];
        num += w * loss;
        den += w;
    }
    return den > 0.0 ? num / den : 0.0;
}

std::vector<double> parameter_shift_gradient(const std::vector<std::vector<double>>& xs,
                                             const std::vector<int>& ys,
                                             const LearnerParams& params,
                                             const std::vector<double>& weights,
                                             bool invert_class_map) {
    check_params(params);
    if (xs.size() != ys.size()) {
        throw std::invalid_argument("gradient: sample/label count mismatch");
    }
    if (!weights.empty() && weights.size() != xs.size()) {
        throw std::invalid_argument("gradient: weight count mismatch");
    }
    const int num_params = params.param_count();
    std::vector<double> grad(static_cast<std::size_t>(num_params), 0.0);
    std::vector<double> theta = params.theta;
    double total_weight = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double w = weights.empty() ? 1.0 : weights[i];
        if (w == 0.0) continue;
        LearnerEvaluator eval(xs[i], params.num_qubits);
        const double p = clamp_prob(eval.probability(theta, invert_class_map));
        const double dl_dp = (p - static_cast<double>(ys[i])) / (p * (1.0 - p));
        for (int j = 0; j < num_params; ++j) {
            const double saved = theta[static_cast<std::size_t>(j)];
            theta[static_cast<std::size_t>(j)] = saved + M_PI / 2.0;
            const double plus = eval.probability(theta, invert_class_map);
            theta[static_cast<std::size_t>(j)] = saved - M_PI / 2.0;
            const double minus = eval.probability(theta, invert_class_map);
            theta[static_cast<std::size_t>(j)] = saved;
            grad[static_cast<std::size_t>(j)] += w * dl_dp * (plus - minus) / 2.0;
        }
        total_weight += w;
    }
    if (total_weight > 0.0) {
        for (double& g : grad) g /= total_weight;
    }
    return grad;
}

void adam_step(LearnerParams& params, const std::vector<double>& grads, AdamState& state,
               const TrainConfig& config) {
    check_params(params);
    adam_step(params.theta, grads, state, config);
}

void adam_step(std::vector<double>& theta, const std::vector<double>& grads, AdamState& state,
               const TrainConfig& config) {
    if (grads.size() != theta.size()) {
        throw std::invalid_argument("adam_step: gradient size mismatch");
    }
    if (state.m.empty()) {
        state.m.assign(theta.size(), 0.0);
        state.v.assign(theta.size(), 0.0);
    }
    if (state.m.size() != theta.size()) {
        throw std::invalid_argument("adam_step: state size mismatch");
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
    for (std::size_t j = 0; j < theta.size(); ++j) {
        state.m[j] = config.beta1 * state.m[j] + (1.0 - config.beta1) * grads[j];
        state.v[j] = config.beta2 * state.v[j] + (1.0 - config.beta2) * grads[j] * grads[j];
        const double m_hat = state.m[j] / bc1;
        const double v_hat = state.v[j] / bc2;
        theta[j] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
}

TrainResult train_learner(const data::DatasetView& train,
                          const std::vector<double>* sample_weights, const TrainConfig& config,
                          std::uint64_t init_seed) {
    const int n_samples = train.size();
    if (n_samples < 1) throw ConfigError("training set is empty");
    if (config.batch_size < 1 || config.batch_size > n_samples) {
        throw ConfigError("batch_size must be in [1, " + std::to_string(n_samples) + "], got " +
                          std::to_string(config.batch_size));
    }
    if (config.learning_rate <= 0.0) {
        throw ConfigError("learning_rate must be positive, got " +
                          format_double(config.learning_rate));
    }
    if (config.epochs < 1) {
        throw ConfigError("epochs must be positive, got " + std::to_string(config.epochs));
    }
    if (sample_weights && static_cast<int>(sample_weights->size()) != n_samples) {
        throw ConfigError("sample weight count " + std::to_string(sample_weights->size()) +
                          " does not match training size " + std::to_string(n_samples));
    }

    std::vector<std::vector<double>> xs(static_cast<std::size_t>(n_samples));
    std::vector<int> ys(static_cast<std::size_t>(n_samples));
    int num_features = 0;
    for (int i = 0; i < n_samples; ++i) {
        auto row = train.row(i);
        xs[static_cast<std::size_t>(i)].assign(row.begin(), row.end());
        ys[static_cast<std::size_t>(i)] = train.label(i);
        num_features = static_cast<int>(row.size());
    }

    TrainResult result;
    result.params = LearnerParams::random_init(learner_qubits(num_features), init_seed);
    AdamState adam;
    Rng shuffle_rng(config.seed);
    std::vector<int> order(static_cast<std::size_t>(n_samples));
    for (int i = 0; i < n_samples; ++i) order[static_cast<std::size_t>(i)] = i;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_num = 0.0;
        double loss_den = 0.0;
        for (int start = 0; start < n_samples; start += config.batch_size) {
            const int stop = std::min(start + config.batch_size, n_samples);
            std::vector<std::vector<double>> bx;
            std::vector<int> by;
            std::vector<double> bw;
            bx.reserve(static_cast<std::size_t>(stop - start));
            for (int k = start; k < stop; ++k) {
                const int i = order[static_cast<std::size_t>(k)];
                bx.push_back(xs[static_cast<std::size_t>(i)]);
                by.push_back(ys[static_cast<std::size_t>(i)]);
                if (sample_weights) bw.push_back((*sample_weights)[static_cast<std::size_t>(i)]);
            }
            if (sample_weights) {
                double batch_weight = 0.0;
                for (double w : bw) batch_weight += w;
                if (batch_weight == 0.0) continue;  // no information, no step
            }
            std::vector<double> probs(bx.size());
            for (std::size_t k = 0; k < bx.size(); ++k) {
                probs[k] = predict_proba(bx[k], result.params, config.invert_class_map);
            }
            for (std::size_t k = 0; k < bx.size(); ++k) {
                const double p = clamp_prob(probs[k]);
                const double loss = by[k] == 1 ? -std::log(p) : -std::log(1.0 - p);
                const double w = sample_weights ? bw[k] : 1.0;
                loss_num += w * loss;
                loss_den += w;
            }
            const auto grad = parameter_shift_gradient(bx, by, result.params, bw,
                                                       config.invert_class_map);
            adam_step(result.params, grad, adam, config);
        }
        result.loss_history.push_back(loss_den > 0.0 ? loss_num / loss_den : 0.0);
    }
    return result;
}

std::string serialize_learner(const LearnerParams& params) {
    check_params(params);
    std::string out = std::to_string(params.num_qubits) + "," + std::to_string(params.seed);
    for (double t : params.theta) {
        out += ',';
        out += format_17g(t);
    }
    return out;
}

LearnerParams parse_learner(const std::string& record) {
    std::vector<std::string> fields;
    std::size_t pos = 0;
    while (pos <= record.size()) {
        const std::size_t comma = record.find(',', pos);
        if (comma == std::string::npos) {
            fields.push_back(record.substr(pos));
            break;
        }
        fields.push_back(record.substr(pos, comma - pos));
        pos = comma + 1;
    }
    if (fields.size() < 2) throw DataError("learner record is missing the n,seed prefix");
    LearnerParams params;
    try {
        params.num_qubits = std::stoi(fields[0]);
        params.seed = std::stoull(fields[1]);
        for (std::size_t i = 2; i < fields.size(); ++i) {
            params.theta.push_back(std::stod(fields[i]));
        }
    } catch (const std::exception&) {
        throw DataError("learner record has a malformed numeric field");
    }
    if (params.num_qubits < 1 ||
        static_cast<int>(params.theta.size()) != 6 * params.num_qubits) {
        throw DataError("learner record declares " + fields[0] + " qubits but carries " +
                        std::to_string(params.theta.size()) + " angles");
    }
    return params;
}

}  // namespace qens::variational
