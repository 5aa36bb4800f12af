#include "qens/forest.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "qens/common.hpp"
#include "qens/metrics.hpp"

namespace qens::forest {
namespace {

double gini(int count, int count1) {
    if (count == 0) return 0.0;
    const double p1 = static_cast<double>(count1) / static_cast<double>(count);
    const double p0 = 1.0 - p1;
    return 1.0 - p0 * p0 - p1 * p1;
}

struct Matrix {
    std::vector<std::vector<double>> xs;
    std::vector<int> ys;
    int num_features = 0;
};

Matrix load_view(const data::DatasetView& view) {
    Matrix m;
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

}  // namespace

const char* max_features_name(MaxFeatures mf) {
    return mf == MaxFeatures::sqrt_of ? "sqrt" : "log2";
}

MaxFeatures parse_max_features(const std::string& name) {
    if (name == "sqrt") return MaxFeatures::sqrt_of;
    if (name == "log2") return MaxFeatures::log2_of;
    throw ConfigError("unknown max_features '" + name + "' (expected sqrt or log2)");
}

int feature_subsample_size(MaxFeatures mf, int num_features) {
    if (num_features < 1) {
        throw ConfigError("feature count must be positive, got " +
                          std::to_string(num_features));
    }
    int k;
    if (mf == MaxFeatures::sqrt_of) {
        k = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(num_features))));
    } else {
        k = static_cast<int>(std::ceil(std::log2(static_cast<double>(num_features))));
    }
    return std::min(std::max(k, 1), num_features);
}

std::string ForestConfig::id() const {
    return "forest_ne" + std::to_string(n_estimators) + "_md" + std::to_string(max_depth) +
           "_mss" + std::to_string(min_samples_split) + "_msl" +
           std::to_string(min_samples_leaf) + "_" + max_features_name(max_features);
}

void ForestConfig::validate() const {
    if (n_estimators < 1) {
        throw ConfigError("n_estimators must be positive, got " + std::to_string(n_estimators));
    }
    if (max_depth < 1) {
        throw ConfigError("max_depth must be positive, got " + std::to_string(max_depth));
    }
    if (min_samples_split < 2) {
        throw ConfigError("min_samples_split must be at least 2, got " +
                          std::to_string(min_samples_split));
    }
    if (min_samples_leaf < 1) {
        throw ConfigError("min_samples_leaf must be positive, got " +
                          std::to_string(min_samples_leaf));
    }
}

double DecisionTree::predict(std::span<const double> x) const {
    if (nodes.empty()) throw std::logic_error("predict on an empty tree");
    int at = 0;
    while (!nodes[static_cast<std::size_t>(at)].is_leaf()) {
        const TreeNode& node = nodes[static_cast<std::size_t>(at)];
        if (node.feature >= static_cast<int>(x.size())) {
            throw DataError("tree expects at least " + std::to_string(node.feature + 1) +
                            " features, sample has " + std::to_string(x.size()));
        }
        at = x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left
                                                                         : node.right;
    }
    return nodes[static_cast<std::size_t>(at)].p1;
}

int DecisionTree::depth() const {
    std::function<int(int)> walk = [&](int at) -> int {
        const TreeNode& node = nodes[static_cast<std::size_t>(at)];
        if (node.is_leaf()) return 0;
        return 1 + std::max(walk(node.left), walk(node.right));
    };
    return nodes.empty() ? 0 : walk(0);
}

DecisionTree fit_tree(const data::DatasetView& train, const ForestConfig& config, Rng& rng) {
    config.validate();
    if (train.size() < 1) throw ConfigError("cannot fit a tree on an empty view");
    const Matrix m = load_view(train);

    DecisionTree tree;

    std::function<int(std::vector<int>, int)> build = [&](std::vector<int> rows,
                                                          int depth) -> int {
        const int count = static_cast<int>(rows.size());
        int count1 = 0;
        for (int r : rows) count1 += m.ys[static_cast<std::size_t>(r)];

        const int node_index = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes.back().count = count;
        tree.nodes.back().p1 = static_cast<double>(count1) / static_cast<double>(count);

        const bool pure = count1 == 0 || count1 == count;
        if (pure || depth >= config.max_depth || count < config.min_samples_split) {
            return node_index;
        }

        // Per-node feature subsample; candidates scanned in ascending feature
        // order so equally impure splits resolve to the lowest feature and
        // then the lowest threshold.
        std::vector<int> features =
            rng.sample_without_replacement(m.num_features,
                                           feature_subsample_size(config.max_features,
                                                                  m.num_features));
        std::sort(features.begin(), features.end());

        double best_gini = 2.0;  // any real split scores below this
        int best_feature = -1;
        double best_threshold = 0.0;
        std::vector<std::pair<double, int>> ordered;
        ordered.reserve(rows.size());
        for (int f : features) {
            ordered.clear();
            for (int r : rows) {
                ordered.emplace_back(m.xs[static_cast<std::size_t>(r)][static_cast<std::size_t>(f)],
                                     m.ys[static_cast<std::size_t>(r)]);
            }
            std::sort(ordered.begin(), ordered.end());
            int left_count1 = 0;
            for (int i = 0; i + 1 < count; ++i) {
                left_count1 += ordered[static_cast<std::size_t>(i)].second;
                if (ordered[static_cast<std::size_t>(i)].first ==
                    ordered[static_cast<std::size_t>(i + 1)].first) {
                    continue;
                }
                const int left_n = i + 1;
                const int right_n = count - left_n;
                if (left_n < config.min_samples_leaf || right_n < config.min_samples_leaf) {
                    continue;
                }
                const double weighted =
                    (static_cast<double>(left_n) * gini(left_n, left_count1) +
                     static_cast<double>(right_n) * gini(right_n, count1 - left_count1)) /
                    static_cast<double>(count);
                if (weighted < best_gini) {
                    best_gini = weighted;
                    best_feature = f;
                    best_threshold = (ordered[static_cast<std::size_t>(i)].first +
                                      ordered[static_cast<std::size_t>(i + 1)].first) /
                                     2.0;
                }
            }
        }
        if (best_feature < 0) return node_index;  // nothing satisfies the leaf minimum

        std::vector<int> left_rows;
        std::vector<int> right_rows;
        for (int r : rows) {
            const double v =
                m.xs[static_cast<std::size_t>(r)][static_cast<std::size_t>(best_feature)];
            (v <= best_threshold ? left_rows : right_rows).push_back(r);
        }
        rows.clear();
        rows.shrink_to_fit();

        const int left = build(std::move(left_rows), depth + 1);
        const int right = build(std::move(right_rows), depth + 1);
        tree.nodes[static_cast<std::size_t>(node_index)].feature = best_feature;
        tree.nodes[static_cast<std::size_t>(node_index)].threshold = best_threshold;
        tree.nodes[static_cast<std::size_t>(node_index)].left = left;
        tree.nodes[static_cast<std::size_t>(node_index)].right = right;
        return node_index;
    };

    std::vector<int> all(static_cast<std::size_t>(train.size()));
    for (int i = 0; i < train.size(); ++i) all[static_cast<std::size_t>(i)] = i;
    build(std::move(all), 0);
    return tree;
}

double ForestModel::predict_proba(std::span<const double> x) const {
    if (trees.empty()) throw std::logic_error("predict on an empty forest");
    double sum = 0.0;
    for (const auto& tree : trees) sum += tree.predict(x);
    return sum / static_cast<double>(trees.size());
}

std::vector<double> ForestModel::predict_proba(const data::DatasetView& view) const {
    std::vector<double> out(static_cast<std::size_t>(view.size()));
    for (int i = 0; i < view.size(); ++i) {
        out[static_cast<std::size_t>(i)] = predict_proba(view.row(i));
    }
    return out;
}

ForestModel fit_forest(const data::DatasetView& train, const ForestConfig& config) {
    config.validate();
    const int n_samples = train.size();
    if (n_samples < 1) throw ConfigError("cannot fit a forest on an empty view");

    ForestModel model;
    model.config = config;
    model.single_class_training = [&] {
        const int first = train.label(0);
        for (int i = 1; i < n_samples; ++i) {
            if (train.label(i) != first) return false;
        }
        return true;
    }();

    Rng rng(config.seed);
    model.trees.reserve(static_cast<std::size_t>(config.n_estimators));
    std::vector<int> bootstrap(static_cast<std::size_t>(n_samples));
    for (int t = 0; t < config.n_estimators; ++t) {
        for (int i = 0; i < n_samples; ++i) {
            bootstrap[static_cast<std::size_t>(i)] = rng.uniform_int(n_samples);
        }
        model.trees.push_back(fit_tree(train.select(bootstrap), config, rng));
    }
    return model;
}

std::vector<SearchResult> randomized_search(const data::DatasetView& train,
                                            const std::vector<int>& fold_ids, int num_folds,
                                            int n_iter, std::uint64_t seed, int workers) {
    if (n_iter < 1) {
        throw ConfigError("randomized search needs at least one draw, got " +
                          std::to_string(n_iter));
    }
    if (num_folds < 2) {
        throw ConfigError("randomized search needs at least 2 folds, got " +
                          std::to_string(num_folds));
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

    std::vector<SearchResult> results(static_cast<std::size_t>(n_iter));
    parallel_for(n_iter, workers, [&](int draw) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(draw)));
        ForestConfig config;
        config.n_estimators = (rng.uniform_int(10) + 1) * 100;
        config.max_depth = 5 + rng.uniform_int(16);
        config.min_samples_split = 2 + rng.uniform_int(9);
        config.min_samples_leaf = 1 + rng.uniform_int(5);
        config.max_features = rng.uniform_int(2) == 0 ? MaxFeatures::sqrt_of
                                                      : MaxFeatures::log2_of;
        config.seed = derive_seed(seed, 50000 + static_cast<std::uint64_t>(draw));

        SearchResult res;
        res.config = config;
        for (int fold = 0; fold < num_folds; ++fold) {
            std::vector<int> fit_pos;
            std::vector<int> val_pos;
            for (int i = 0; i < train.size(); ++i) {
                (fold_ids[static_cast<std::size_t>(i)] == fold ? val_pos : fit_pos).push_back(i);
            }
            const ForestModel model = fit_forest(train.select(fit_pos), config);
            const data::DatasetView val = train.select(val_pos);
            std::vector<int> pred;
            std::vector<int> truth;
            for (int i = 0; i < val.size(); ++i) {
                pred.push_back(metrics::threshold_label(model.predict_proba(val.row(i))));
                truth.push_back(val.label(i));
            }
            res.fold_f1.push_back(metrics::weighted_f1(pred, truth));
        }
        double sum = 0.0;
        for (double f1 : res.fold_f1) sum += f1;
        res.mean_weighted_f1 = sum / static_cast<double>(num_folds);
        results[static_cast<std::size_t>(draw)] = std::move(res);
    });

    std::stable_sort(results.begin(), results.end(),
                     [](const SearchResult& a, const SearchResult& b) {
                         return a.mean_weighted_f1 > b.mean_weighted_f1;
                     });
    return results;
}

}  // namespace qens::forest
