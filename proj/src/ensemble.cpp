#include "qens/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "qens/common.hpp"
#include "qens/metrics.hpp"
#include "qens/rng.hpp"

namespace qens::ensemble {
namespace {

constexpr double kErrorClamp = 1e-10;
constexpr double kProbClamp = 1e-12;

double clamp_prob(double p) {
    if (p < kProbClamp) return kProbClamp;
    if (p > 1.0 - kProbClamp) return 1.0 - kProbClamp;
    return p;
}

void check_model(const EnsembleModel& model) {
    if (model.learners.empty()) throw ConfigError("ensemble has no learners");
    if (model.learner_weights.size() != model.learners.size()) {
        throw ConfigError("ensemble carries " + std::to_string(model.learner_weights.size()) +
                          " weights for " + std::to_string(model.learners.size()) + " learners");
    }
    for (const auto& learner : model.learners) {
        if (learner.num_qubits != model.learners.front().num_qubits) {
            throw ConfigError("ensemble learners disagree on qubit count");
        }
    }
}

void check_train_config(const EnsembleTrainConfig& config, int n_samples) {
    if (config.num_learners < 1) {
        throw ConfigError("ensemble size must be positive, got " +
                          std::to_string(config.num_learners));
    }
    if (n_samples < 1) throw ConfigError("training set is empty");
    if (config.learner.batch_size < 1) {
        throw ConfigError("batch_size must be positive, got " +
                          std::to_string(config.learner.batch_size));
    }
    if (config.learner.learning_rate <= 0.0) {
        throw ConfigError("learning_rate must be positive, got " +
                          format_double(config.learner.learning_rate));
    }
    if (config.learner.epochs < 1) {
        throw ConfigError("epochs must be positive, got " +
                          std::to_string(config.learner.epochs));
    }
}

struct TrainMatrix {
    std::vector<std::vector<double>> xs;
    std::vector<int> ys;
    int num_features = 0;
};

TrainMatrix load_view(const data::DatasetView& view) {
    TrainMatrix m;
    m.xs.resize(static_cast<std::size_t>(view.size()));
    m.ys.resize(static_cast<std::size_t>(view.size()));
    for (int i = 0; i < view.size(); ++i) {
        auto row = view.row(i);
        m.xs[static_cast<std::size_t>(i)].assign(row.begin(), row.end());
        m.ys[static_cast<std::size_t>(i)] = view.label(i);
        m.num_features = static_cast<int>(row.size());
    }
    return m;
}

/// Training subsets cannot be larger than their source, so the configured
/// batch size is capped at the effective training-set size.
variational::TrainConfig capped(variational::TrainConfig config, int n_samples) {
    config.batch_size = std::min(config.batch_size, n_samples);
    return config;
}

std::string format_17g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

const char* kind_name(EnsembleKind kind) {
    switch (kind) {
        case EnsembleKind::soft_vote: return "soft_vote";
        case EnsembleKind::bagging: return "bagging";
        case EnsembleKind::adaboost: return "adaboost";
    }
    throw std::logic_error("unreachable ensemble kind");
}

EnsembleKind parse_kind(const std::string& name) {
    if (name == "soft_vote") return EnsembleKind::soft_vote;
    if (name == "bagging") return EnsembleKind::bagging;
    if (name == "adaboost") return EnsembleKind::adaboost;
    throw ConfigError("unknown ensemble kind '" + name +
                      "' (expected soft_vote, bagging, or adaboost)");
}

int EnsembleModel::learner_qubit_count() const {
    check_model(*this);
    return learners.front().num_qubits;
}

int EnsembleModel::total_qubits() const { return learner_qubit_count() * num_learners(); }

int EnsembleModel::param_count() const { return 6 * learner_qubit_count() * num_learners(); }

std::vector<double> learner_probabilities(const EnsembleModel& model, std::span<const double> x) {
    check_model(model);
    std::vector<double> probs;
    probs.reserve(model.learners.size());
    const variational::LearnerEvaluator eval(x, model.learner_qubit_count());
    for (const auto& learner : model.learners) {
        probs.push_back(eval.probability(learner.theta, model.invert_class_map));
    }
    return probs;
}

double aggregate_probability(const EnsembleModel& model, const std::vector<double>& probs) {
    check_model(model);
    if (probs.size() != model.learners.size()) {
        throw std::invalid_argument("aggregate_probability: probability count mismatch");
    }
    if (model.kind == EnsembleKind::soft_vote) {
        double sum = 0.0;
        for (double p : probs) sum += p;
        return sum / static_cast<double>(probs.size());
    }
    double num = 0.0;
    double den = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
        num += model.learner_weights[k] * probs[k];
        den += model.learner_weights[k];
    }
    if (den <= 0.0) throw ConfigError("ensemble weights sum to zero");
    return num / den;
}

double ensemble_predict(const EnsembleModel& model, std::span<const double> x) {
    return aggregate_probability(model, learner_probabilities(model, x));
}

std::vector<double> ensemble_predict(const EnsembleModel& model, const data::DatasetView& view) {
    std::vector<double> out(static_cast<std::size_t>(view.size()));
    for (int i = 0; i < view.size(); ++i) {
        out[static_cast<std::size_t>(i)] = ensemble_predict(model, view.row(i));
    }
    return out;
}

double soft_vote_predict(const EnsembleModel& model, std::span<const double> x) {
    if (model.kind != EnsembleKind::soft_vote) {
        throw ConfigError(std::string("soft_vote_predict called on a ") + kind_name(model.kind) +
                          " model");
    }
    return ensemble_predict(model, x);
}

double ensemble_predict_shots(const EnsembleModel& model, std::span<const double> x, long shots,
                              std::uint64_t seed) {
    check_model(model);
    std::vector<double> probs;
    probs.reserve(model.learners.size());
    for (std::size_t k = 0; k < model.learners.size(); ++k) {
        probs.push_back(variational::predict_proba_shots(x, model.learners[k], shots,
                                                         derive_seed(seed, k),
                                                         model.invert_class_map));
    }
    return aggregate_probability(model, probs);
}

sim::Circuit build_joint_circuit(const EnsembleModel& model, std::span<const double> x) {
    check_model(model);
    const int n = model.learner_qubit_count();
    sim::Circuit joint(model.total_qubits(), "joint_ensemble");
    for (int k = 0; k < model.num_learners(); ++k) {
        const sim::Circuit single =
            variational::build_learner_circuit(x, model.learners[static_cast<std::size_t>(k)]);
        for (const sim::Gate& gate : single.gates) {
            sim::Gate shifted = gate;
            for (int& q : shifted.controls) q += k * n;
            for (int& q : shifted.targets) q += k * n;
            joint.add(std::move(shifted));
        }
    }
    return joint;
}

std::vector<double> joint_learner_probabilities(const EnsembleModel& model,
                                                std::span<const double> x) {
    check_model(model);
    const int n = model.learner_qubit_count();
    if (model.total_qubits() > sim::max_qubits()) return learner_probabilities(model, x);
    const sim::Circuit joint = build_joint_circuit(model, x);
    const sim::QuantumState state =
        sim::run_circuit(joint, sim::QuantumState::zero(joint.num_qubits));
    std::vector<double> probs(static_cast<std::size_t>(model.num_learners()));
    for (int k = 0; k < model.num_learners(); ++k) {
        const double p1 = sim::marginal_probability(state, k * n);
        probs[static_cast<std::size_t>(k)] = model.invert_class_map ? 1.0 - p1 : p1;
    }
    return probs;
}

std::vector<double> soft_vote_gradient(const EnsembleModel& model,
                                       const std::vector<std::vector<double>>& xs,
                                       const std::vector<int>& ys) {
    check_model(model);
    if (xs.size() != ys.size() || xs.empty()) {
        throw std::invalid_argument("soft_vote_gradient: bad batch");
    }
    const int num_learners = model.num_learners();
    const int per_learner = 6 * model.learner_qubit_count();
    std::vector<double> grad(static_cast<std::size_t>(per_learner * num_learners), 0.0);
    std::vector<double> theta;

    for (std::size_t i = 0; i < xs.size(); ++i) {
        const variational::LearnerEvaluator eval(xs[i], model.learner_qubit_count());
        double mean_p = 0.0;
        for (const auto& learner : model.learners) {
            mean_p += eval.probability(learner.theta, model.invert_class_map);
        }
        mean_p /= static_cast<double>(num_learners);
        const double p = clamp_prob(mean_p);
        const double dl_dp = (p - static_cast<double>(ys[i])) / (p * (1.0 - p));

        for (int k = 0; k < num_learners; ++k) {
            theta = model.learners[static_cast<std::size_t>(k)].theta;
            for (int j = 0; j < per_learner; ++j) {
                const double saved = theta[static_cast<std::size_t>(j)];
                theta[static_cast<std::size_t>(j)] = saved + M_PI / 2.0;
                const double plus = eval.probability(theta, model.invert_class_map);
                theta[static_cast<std::size_t>(j)] = saved - M_PI / 2.0;
                const double minus = eval.probability(theta, model.invert_class_map);
                theta[static_cast<std::size_t>(j)] = saved;
                grad[static_cast<std::size_t>(k * per_learner + j)] +=
                    dl_dp * (plus - minus) / 2.0 / static_cast<double>(num_learners);
            }
        }
    }
    for (double& g : grad) g /= static_cast<double>(xs.size());
    return grad;
}

EnsembleTrainResult train_soft_vote(const data::DatasetView& train,
                                    const EnsembleTrainConfig& config) {
    check_train_config(config, train.size());
    const TrainMatrix m = load_view(train);
    const int n_samples = train.size();
    const int num_learners = config.num_learners;
    const variational::TrainConfig tc = capped(config.learner, n_samples);
    const int n = variational::learner_qubits(m.num_features);
    const int per_learner = 6 * n;

    EnsembleTrainResult result;
    result.model.kind = EnsembleKind::soft_vote;
    result.model.invert_class_map = tc.invert_class_map;
    for (int k = 0; k < num_learners; ++k) {
        result.model.learners.push_back(variational::LearnerParams::random_init(
            n, derive_seed(tc.seed, 500 + static_cast<std::uint64_t>(k))));
        result.model.learner_weights.push_back(1.0 / static_cast<double>(num_learners));
    }

    variational::AdamState adam;
    Rng shuffle_rng(tc.seed);
    std::vector<int> order(static_cast<std::size_t>(n_samples));
    for (int i = 0; i < n_samples; ++i) order[static_cast<std::size_t>(i)] = i;
    std::vector<double> joint_theta(static_cast<std::size_t>(per_learner * num_learners));

    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (int start = 0; start < n_samples; start += tc.batch_size) {
            const int stop = std::min(start + tc.batch_size, n_samples);
            std::vector<std::vector<double>> bx;
            std::vector<int> by;
            bx.reserve(static_cast<std::size_t>(stop - start));
            for (int pos = start; pos < stop; ++pos) {
                const int i = order[static_cast<std::size_t>(pos)];
                bx.push_back(m.xs[static_cast<std::size_t>(i)]);
                by.push_back(m.ys[static_cast<std::size_t>(i)]);
            }
            for (std::size_t b = 0; b < bx.size(); ++b) {
                const double p = clamp_prob(ensemble_predict(result.model, bx[b]));
                epoch_loss += by[b] == 1 ? -std::log(p) : -std::log(1.0 - p);
            }
            const auto grad = soft_vote_gradient(result.model, bx, by);

            for (int k = 0; k < num_learners; ++k) {
                const auto& theta = result.model.learners[static_cast<std::size_t>(k)].theta;
                std::copy(theta.begin(), theta.end(), joint_theta.begin() + k * per_learner);
            }
            variational::adam_step(joint_theta, grad, adam, tc);
            for (int k = 0; k < num_learners; ++k) {
                auto& theta = result.model.learners[static_cast<std::size_t>(k)].theta;
                std::copy(joint_theta.begin() + k * per_learner,
                          joint_theta.begin() + (k + 1) * per_learner, theta.begin());
            }
        }
        result.loss_history.push_back(epoch_loss / static_cast<double>(n_samples));
    }
    return result;
}

std::vector<std::vector<int>> bagging_partition(int n, int num_subsets, std::uint64_t seed) {
    if (num_subsets < 1 || num_subsets > n) {
        throw ConfigError("cannot cut " + std::to_string(n) + " rows into " +
                          std::to_string(num_subsets) + " non-empty subsets");
    }
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng rng(seed);
    rng.shuffle(order);

    std::vector<std::vector<int>> subsets(static_cast<std::size_t>(num_subsets));
    const int base = n / num_subsets;
    const int remainder = n % num_subsets;
    int cursor = 0;
    for (int k = 0; k < num_subsets; ++k) {
        const int size = base + (k < remainder ? 1 : 0);
        subsets[static_cast<std::size_t>(k)].assign(order.begin() + cursor,
                                                    order.begin() + cursor + size);
        std::sort(subsets[static_cast<std::size_t>(k)].begin(),
                  subsets[static_cast<std::size_t>(k)].end());
        cursor += size;
    }
    return subsets;
}

EnsembleTrainResult train_bagging(const data::DatasetView& train,
                                  const EnsembleTrainConfig& config,
                                  BaggingWeighting weighting) {
    check_train_config(config, train.size());
    const int n_samples = train.size();
    const int num_learners = config.num_learners;
    if (num_learners > n_samples) {
        throw ConfigError("bagging needs at least one sample per learner: " +
                          std::to_string(num_learners) + " learners for " +
                          std::to_string(n_samples) + " rows");
    }

    EnsembleTrainResult result;
    result.model.kind = EnsembleKind::bagging;
    result.model.invert_class_map = config.learner.invert_class_map;

    const auto subsets =
        bagging_partition(n_samples, num_learners, derive_seed(config.learner.seed, 400));
    for (int k = 0; k < num_learners; ++k) {
        const std::vector<int>& positions = subsets[static_cast<std::size_t>(k)];
        variational::TrainConfig tc =
            capped(config.learner, static_cast<int>(positions.size()));
        tc.seed = derive_seed(config.learner.seed, 600 + static_cast<std::uint64_t>(k));
        const auto trained =
            variational::train_learner(train.select(positions), nullptr, tc,
                                       derive_seed(config.learner.seed,
                                                   500 + static_cast<std::uint64_t>(k)));
        result.model.learners.push_back(trained.params);
    }

    if (weighting == BaggingWeighting::uniform) {
        result.model.learner_weights.assign(static_cast<std::size_t>(num_learners),
                                            1.0 / static_cast<double>(num_learners));
    } else {
        std::vector<double> weights;
        double total = 0.0;
        for (const auto& learner : result.model.learners) {
            std::vector<int> pred;
            std::vector<int> truth;
            for (int i = 0; i < n_samples; ++i) {
                pred.push_back(metrics::threshold_label(variational::predict_proba(
                    train.row(i), learner, config.learner.invert_class_map)));
                truth.push_back(train.label(i));
            }
            const double acc = metrics::accuracy(pred, truth);
            weights.push_back(acc);
            total += acc;
        }
        if (total <= 0.0) {
            weights.assign(static_cast<std::size_t>(num_learners),
                           1.0 / static_cast<double>(num_learners));
        } else {
            for (double& w : weights) w /= total;
        }
        result.model.learner_weights = std::move(weights);
    }
    return result;
}

EnsembleTrainResult train_adaboost(const data::DatasetView& train,
                                   const EnsembleTrainConfig& config) {
    check_train_config(config, train.size());
    const int n_samples = train.size();
    const int num_learners = config.num_learners;
    const int subset_size = (n_samples + num_learners - 1) / num_learners;

    EnsembleTrainResult result;
    result.model.kind = EnsembleKind::adaboost;
    result.model.invert_class_map = config.learner.invert_class_map;

    std::vector<double> sample_weights(static_cast<std::size_t>(n_samples),
                                       1.0 / static_cast<double>(n_samples));

    for (int t = 0; t < num_learners; ++t) {
        Rng draw_rng(derive_seed(config.learner.seed, 700 + static_cast<std::uint64_t>(t)));
        std::vector<int> positions =
            draw_rng.weighted_sample_without_replacement(sample_weights, subset_size);
        std::sort(positions.begin(), positions.end());

        std::vector<double> subset_weights;
        subset_weights.reserve(positions.size());
        for (int pos : positions) {
            subset_weights.push_back(sample_weights[static_cast<std::size_t>(pos)]);
        }

        variational::TrainConfig tc = capped(config.learner, static_cast<int>(positions.size()));
        tc.seed = derive_seed(config.learner.seed, 600 + static_cast<std::uint64_t>(t));
        const auto trained =
            variational::train_learner(train.select(positions), &subset_weights, tc,
                                       derive_seed(config.learner.seed,
                                                   500 + static_cast<std::uint64_t>(t)));

        // Weighted error over the full training set, clamped away from both
        // 0 and 1/2 so alpha stays finite and positive.
        double eps = 0.0;
        std::vector<bool> miss(static_cast<std::size_t>(n_samples), false);
        for (int i = 0; i < n_samples; ++i) {
            const double p = variational::predict_proba(train.row(i), trained.params,
                                                        config.learner.invert_class_map);
            const bool wrong = metrics::threshold_label(p) != train.label(i);
            miss[static_cast<std::size_t>(i)] = wrong;
            if (wrong) eps += sample_weights[static_cast<std::size_t>(i)];
        }
        eps = std::min(std::max(eps, kErrorClamp), 0.5 - kErrorClamp);
        const double alpha = 0.5 * std::log((1.0 - eps) / eps);
        result.round_errors.push_back(eps);
        result.model.learners.push_back(trained.params);
        result.model.learner_weights.push_back(alpha);

        double total = 0.0;
        for (int i = 0; i < n_samples; ++i) {
            if (miss[static_cast<std::size_t>(i)]) {
                sample_weights[static_cast<std::size_t>(i)] *= std::exp(alpha);
            }
            total += sample_weights[static_cast<std::size_t>(i)];
        }
        for (double& w : sample_weights) w /= total;
    }
    return result;
}

EnsembleTrainResult train_ensemble(EnsembleKind kind, const data::DatasetView& train,
                                   const EnsembleTrainConfig& config) {
    switch (kind) {
        case EnsembleKind::soft_vote: return train_soft_vote(train, config);
        case EnsembleKind::bagging: return train_bagging(train, config);
        case EnsembleKind::adaboost: return train_adaboost(train, config);
    }
    throw std::logic_error("unreachable ensemble kind");
}

std::vector<GridPoint> GridSpec::enumerate() const {
    std::vector<GridPoint> points;
    for (double lr : learning_rates) {
        for (int batch : batch_sizes) {
            for (int size : ensemble_sizes) {
                points.push_back({lr, batch, size});
            }
        }
    }
    return points;
}

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of an empty set");
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    if (values.size() % 2 == 1) return values[mid];
    return (values[mid - 1] + values[mid]) / 2.0;
}

std::vector<GridResult> grid_search(EnsembleKind kind, const data::DatasetView& train,
                                    const std::vector<int>& fold_ids, int num_folds,
                                    const GridSpec& spec, std::uint64_t seed, int workers) {
    if (num_folds < 2) {
        throw ConfigError("grid search needs at least 2 folds, got " + std::to_string(num_folds));
    }
    if (static_cast<int>(fold_ids.size()) != train.size()) {
        throw ConfigError("fold assignment covers " + std::to_string(fold_ids.size()) +
                          " rows for a training view of " + std::to_string(train.size()));
    }
    for (int f : fold_ids) {
        if (f < 0 || f >= num_folds) {
            throw ConfigError("fold id " + std::to_string(f) + " outside [0, " +
                              std::to_string(num_folds) + ")");
        }
    }
    if (spec.epochs < 1) {
        throw ConfigError("epochs must be positive, got " + std::to_string(spec.epochs));
    }

    const std::vector<GridPoint> points = spec.enumerate();
    std::vector<GridResult> results(points.size());

    parallel_for(static_cast<int>(points.size()), workers, [&](int gi) {
        const GridPoint& point = points[static_cast<std::size_t>(gi)];
        GridResult res;
        res.point = point;
        for (int fold = 0; fold < num_folds; ++fold) {
            std::vector<int> fit_pos;
            std::vector<int> val_pos;
            for (int i = 0; i < train.size(); ++i) {
                (fold_ids[static_cast<std::size_t>(i)] == fold ? val_pos : fit_pos).push_back(i);
            }
            EnsembleTrainConfig config;
            config.learner.learning_rate = point.learning_rate;
            config.learner.batch_size = point.batch_size;
            config.learner.epochs = spec.epochs;
            config.learner.seed = derive_seed(
                seed, static_cast<std::uint64_t>(gi) * 64 + static_cast<std::uint64_t>(fold));
            config.num_learners = point.ensemble_size;

            const auto trained = train_ensemble(kind, train.select(fit_pos), config);
            const data::DatasetView val = train.select(val_pos);
            std::vector<int> pred;
            std::vector<int> truth;
            for (int i = 0; i < val.size(); ++i) {
                pred.push_back(
                    metrics::threshold_label(ensemble_predict(trained.model, val.row(i))));
                truth.push_back(val.label(i));
            }
            res.fold_accuracies.push_back(metrics::accuracy(pred, truth));
        }
        res.median_val_accuracy = median(res.fold_accuracies);
        results[static_cast<std::size_t>(gi)] = std::move(res);
    });

    std::stable_sort(results.begin(), results.end(),
                     [](const GridResult& a, const GridResult& b) {
                         return a.median_val_accuracy > b.median_val_accuracy;
                     });
    return results;
}

std::string serialize_ensemble(const EnsembleModel& model) {
    check_model(model);
    std::string out;
    out += std::string("kind=") + kind_name(model.kind) + "\n";
    out += std::string("invert=") + (model.invert_class_map ? "1" : "0") + "\n";
    out += "learners=" + std::to_string(model.num_learners()) + "\n";
    out += "weights=";
    for (std::size_t k = 0; k < model.learner_weights.size(); ++k) {
        if (k) out += ',';
        out += format_17g(model.learner_weights[k]);
    }
    out += "\n";
    for (const auto& learner : model.learners) {
        out += "learner=" + variational::serialize_learner(learner) + "\n";
    }
    return out;
}

EnsembleModel parse_ensemble(const std::string& manifest) {
    EnsembleModel model;
    int declared = -1;
    bool saw_kind = false;
    std::istringstream in(manifest);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw DataError("ensemble manifest line is not key=value: '" + line + "'");
        }
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "kind") {
            model.kind = parse_kind(value);
            saw_kind = true;
        } else if (key == "invert") {
            model.invert_class_map = value == "1";
        } else if (key == "learners") {
            try {
                declared = std::stoi(value);
            } catch (const std::exception&) {
                throw DataError("ensemble manifest has a malformed learner count '" + value +
                                "'");
            }
        } else if (key == "weights") {
            std::size_t pos = 0;
            while (pos <= value.size()) {
                const std::size_t comma = value.find(',', pos);
                const std::string field = comma == std::string::npos
                                              ? value.substr(pos)
                                              : value.substr(pos, comma - pos);
                try {
                    model.learner_weights.push_back(std::stod(field));
                } catch (const std::exception&) {
                    throw DataError("ensemble manifest has a malformed weight '" + field + "'");
                }
                if (comma == std::string::npos) break;
                pos = comma + 1;
            }
        } else if (key == "learner") {
            model.learners.push_back(variational::parse_learner(value));
        } else {
            throw DataError("ensemble manifest has an unknown key '" + key + "'");
        }
    }
    if (!saw_kind) throw DataError("ensemble manifest is missing its kind");
    if (declared != model.num_learners()) {
        throw DataError("ensemble manifest declares " + std::to_string(declared) +
                        " learners but carries " + std::to_string(model.num_learners()));
    }
    try {
        check_model(model);
    } catch (const ConfigError& e) {
        throw DataError(std::string("ensemble manifest is inconsistent: ") + e.what());
    }
    return model;
}

}  // namespace qens::ensemble
