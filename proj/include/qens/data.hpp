#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace qens::data {

/// N x F feature matrix with binary labels. Feature reads go through row()
/// so tests can observe which rows an algorithm touches.
class Dataset {
  public:
    Dataset() = default;
    Dataset(int num_rows, int num_cols)
        : rows_(num_rows),
          cols_(num_cols),
          values_(static_cast<std::size_t>(num_rows) * num_cols),
          labels_(static_cast<std::size_t>(num_rows), 0) {}

    int num_rows() const { return rows_; }
    int num_cols() const { return cols_; }

    std::span<const double> row(int i) const {
        if (row_observer) row_observer(i);
        return {values_.data() + static_cast<std::size_t>(i) * cols_,
                static_cast<std::size_t>(cols_)};
    }
    double& at(int r, int c) { return values_[static_cast<std::size_t>(r) * cols_ + c]; }
    double at(int r, int c) const { return values_[static_cast<std::size_t>(r) * cols_ + c]; }

    int label(int i) const { return labels_[static_cast<std::size_t>(i)]; }
    void set_label(int i, int y) { labels_[static_cast<std::size_t>(i)] = y; }
    const std::vector<int>& labels() const { return labels_; }

    std::vector<std::string> feature_names;
    std::string provenance;

    /// Test hook: observes every row() feature access.
    mutable std::function<void(int)> row_observer;

  private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> values_;
    std::vector<int> labels_;
};

/// Row subset of a dataset; position i maps to dataset row indices[i].
struct DatasetView {
    const Dataset* dataset = nullptr;
    std::vector<int> indices;

    int size() const { return static_cast<int>(indices.size()); }
    std::span<const double> row(int i) const {
        return dataset->row(indices[static_cast<std::size_t>(i)]);
    }
    int label(int i) const { return dataset->label(indices[static_cast<std::size_t>(i)]); }

    static DatasetView all(const Dataset& d);
    DatasetView select(const std::vector<int>& positions) const;
};

/// Two isotropic Gaussian clusters: class 0 around (p1, p2), class 1 around
/// (p2, p1), n_samples/2 each, min-max rescaled to [0,1] after generation.
struct BlobConfig {
    double cluster_std = 0.3;
    double p1 = 0.3;
    double p2 = 1.0;
    int n_samples = 100;
    std::uint64_t seed = 0;

    std::string id() const;
};

Dataset make_blobs(const BlobConfig& config);

/// The Gaussian draws behind make_blobs before the [0,1] rescale.
Dataset make_blobs_raw(const BlobConfig& config);

/// The 18-point generation grid: cluster_std in {0.3, 0.5} x p1, p2 in
/// {0.3, 0.5, 1.0}, with per-config derived seeds.
std::vector<BlobConfig> blob_grid(std::uint64_t seed);

struct MinMaxScaler {
    std::vector<double> col_min;
    std::vector<double> col_max;
};

/// Column-wise min/max over the view's rows.
MinMaxScaler minmax_fit(const DatasetView& train);
/// (x - min) / (max - min); constant columns map to 0; values outside the
/// fitted range pass through unclamped.
Dataset minmax_apply(const MinMaxScaler& scaler, const Dataset& d);

struct PcaProjector {
    std::vector<double> mean;                // length F
    std::vector<double> components;          // f x F row-major, orthonormal rows
    std::vector<double> explained_variance;  // length f, non-increasing
    int in_dim = 0;
    int out_dim = 0;
};

/// Train-mean centering + SVD; component signs fixed so each row's
/// largest-magnitude loading is positive.
PcaProjector pca_fit(const DatasetView& train, int components);
Dataset pca_apply(const PcaProjector& p, const Dataset& d);

/// One 80/20 stratified split with stratified fold ids over the training
/// rows for k in {4, 5}.
struct SplitSpec {
    int split_id = 0;
    std::vector<int> train_indices;
    std::vector<int> test_indices;
    /// folds.at(k)[i] = fold of train_indices[i], in [0, k).
    std::map<int, std::vector<int>> folds;
};

std::vector<SplitSpec> stratified_splits(const Dataset& d, int n_splits, double test_frac,
                                         std::uint64_t seed);

Dataset load_csv(const std::string& path);
void save_csv(const Dataset& d, const std::string& path);

/// Split index files: one `row_index,role` line per row (role train|test).
void save_split(const SplitSpec& split, const std::string& path);
SplitSpec load_split(const std::string& path, int num_rows);

}  // namespace qens::data
