#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qens/data.hpp"
#include "qens/rng.hpp"

namespace qens::forest {

enum class MaxFeatures { sqrt_of, log2_of };

const char* max_features_name(MaxFeatures mf);
MaxFeatures parse_max_features(const std::string& name);
/// ceil(sqrt(F)) or ceil(log2(F)), at least 1, at most F.
int feature_subsample_size(MaxFeatures mf, int num_features);

struct ForestConfig {
    int n_estimators = 100;
    int max_depth = 5;
    int min_samples_split = 2;
    int min_samples_leaf = 1;
    MaxFeatures max_features = MaxFeatures::sqrt_of;
    std::uint64_t seed = 0;

    std::string id() const;
    void validate() const;
};

/// Binary tree stored as a node pool; leaves carry the class-1 training
/// fraction. Internal nodes route x[feature] <= threshold to `left`.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double p1 = 0.0;
    int count = 0;

    bool is_leaf() const { return feature < 0; }
};

struct DecisionTree {
    std::vector<TreeNode> nodes;

    double predict(std::span<const double> x) const;
    int depth() const;
};

/// Gini-impurity CART on the view's rows: candidate thresholds are midpoints
/// between consecutive distinct values of each sampled feature; ties between
/// equally good splits go to the lowest feature index, then the lowest
/// threshold. Splitting stops at purity, max_depth, min_samples_split, or
/// when no split leaves both children min_samples_leaf rows.
DecisionTree fit_tree(const data::DatasetView& train, const ForestConfig& config,
                      qens::Rng& rng);

struct ForestModel {
    ForestConfig config;
    std::vector<DecisionTree> trees;
    /// Training saw a single class; predictions are constant.
    bool single_class_training = false;

    double predict_proba(std::span<const double> x) const;
    std::vector<double> predict_proba(const data::DatasetView& view) const;
};

/// n_estimators trees on bootstrap resamples (N draws with replacement);
/// prediction is the mean leaf class-1 fraction.
ForestModel fit_forest(const data::DatasetView& train, const ForestConfig& config);

struct SearchResult {
    ForestConfig config;
    double mean_weighted_f1 = 0.0;
    std::vector<double> fold_f1;
};

/// Randomized hyper-parameter search over n_estimators {100..1000 step 100},
/// max_depth {5..20}, min_samples_split {2..10}, min_samples_leaf {1..5},
/// max_features {sqrt, log2}; each draw is scored by mean weighted F1 over
/// the provided folds of the training view. Ranked best first; ties keep
/// draw order.
std::vector<SearchResult> randomized_search(const data::DatasetView& train,
                                            const std::vector<int>& fold_ids, int num_folds,
                                            int n_iter, std::uint64_t seed, int workers = 1);

}  // namespace qens::forest
