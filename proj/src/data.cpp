#include "qens/data.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "qens/common.hpp"
#include "qens/rng.hpp"

namespace qens::data {

namespace {

void check_finite(const Dataset& d, const std::string& context) {
    for (int r = 0; r < d.num_rows(); ++r)
        for (int c = 0; c < d.num_cols(); ++c)
            if (!std::isfinite(d.at(r, c))) {
                std::ostringstream msg;
                msg << context << ": non-finite value at row " << r << ", column " << c;
                throw DataError(msg.str());
            }
}

std::vector<std::string> default_names(int cols, const char* prefix) {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(cols));
    for (int c = 0; c < cols; ++c) names.push_back(prefix + std::to_string(c + 1));
    return names;
}

/// Stratified fold ids over train rows: per class, shuffled round-robin.
std::vector<int> stratified_folds(const Dataset& d, const std::vector<int>& train_indices, int k,
                                  std::uint64_t seed) {
    std::vector<int> out(train_indices.size(), 0);
    Rng rng(seed);
    for (const int cls : {0, 1}) {
        std::vector<int> positions;
        for (std::size_t i = 0; i < train_indices.size(); ++i)
            if (d.label(train_indices[i]) == cls) positions.push_back(static_cast<int>(i));
        rng.shuffle(positions);
        for (std::size_t i = 0; i < positions.size(); ++i)
            out[static_cast<std::size_t>(positions[i])] = static_cast<int>(i) % k;
    }
    return out;
}

std::uint64_t fold_seed(std::uint64_t seed, int split_id, int k) {
    return derive_seed(seed, 7000u + static_cast<std::uint64_t>(split_id) * 16u +
                                 static_cast<std::uint64_t>(k));
}

}  // namespace

DatasetView DatasetView::all(const Dataset& d) {
    DatasetView v;
    v.dataset = &d;
    v.indices.resize(static_cast<std::size_t>(d.num_rows()));
    for (int i = 0; i < d.num_rows(); ++i) v.indices[static_cast<std::size_t>(i)] = i;
    return v;
}

DatasetView DatasetView::select(const std::vector<int>& positions) const {
    DatasetView v;
    v.dataset = dataset;
    v.indices.reserve(positions.size());
    for (const int p : positions) v.indices.push_back(indices[static_cast<std::size_t>(p)]);
    return v;
}

std::string BlobConfig::id() const {
    return "blobs_std" + format_double(cluster_std) + "_p1_" + format_double(p1) + "_p2_" +
           format_double(p2);
}

Dataset make_blobs_raw(const BlobConfig& config) {
    if (config.n_samples < 2 || config.n_samples % 2 != 0)
        throw ConfigError("make_blobs: n_samples must be even and >= 2");
    if (config.cluster_std <= 0.0) throw ConfigError("make_blobs: cluster_std must be positive");

    const int per_class = config.n_samples / 2;
    Dataset d(config.n_samples, 2);
    Rng rng(config.seed);
    const double centers[2][2] = {{config.p1, config.p2}, {config.p2, config.p1}};
    for (int cls = 0; cls < 2; ++cls) {
        for (int i = 0; i < per_class; ++i) {
            const int r = cls * per_class + i;
            d.at(r, 0) = centers[cls][0] + config.cluster_std * rng.normal();
            d.at(r, 1) = centers[cls][1] + config.cluster_std * rng.normal();
            d.set_label(r, cls);
        }
    }
    d.feature_names = default_names(2, "x");
    d.provenance = config.id();
    return d;
}

Dataset make_blobs(const BlobConfig& config) {
    const Dataset raw = make_blobs_raw(config);

    // Generation-time rescale of the whole set to [0,1].
    const MinMaxScaler scaler = minmax_fit(DatasetView::all(raw));
    Dataset scaled = minmax_apply(scaler, raw);
    scaled.feature_names = raw.feature_names;
    scaled.provenance = config.id();
    return scaled;
}

std::vector<BlobConfig> blob_grid(std::uint64_t seed) {
    const double stds[] = {0.3, 0.5};
    const double ps[] = {0.3, 0.5, 1.0};
    std::vector<BlobConfig> grid;
    std::uint64_t index = 0;
    for (const double s : stds)
        for (const double p1 : ps)
            for (const double p2 : ps) {
                BlobConfig c;
                c.cluster_std = s;
                c.p1 = p1;
                c.p2 = p2;
                c.seed = derive_seed(seed, index++);
                grid.push_back(c);
            }
    return grid;
}

MinMaxScaler minmax_fit(const DatasetView& train) {
    if (train.size() == 0) throw DataError("minmax_fit: empty training view");
    const int cols = train.dataset->num_cols();
    MinMaxScaler s;
    s.col_min.assign(static_cast<std::size_t>(cols), 0.0);
    s.col_max.assign(static_cast<std::size_t>(cols), 0.0);
    for (int i = 0; i < train.size(); ++i) {
        const auto row = train.row(i);
        for (int c = 0; c < cols; ++c) {
            if (i == 0 || row[static_cast<std::size_t>(c)] < s.col_min[static_cast<std::size_t>(c)])
                s.col_min[static_cast<std::size_t>(c)] = row[static_cast<std::size_t>(c)];
            if (i == 0 || row[static_cast<std::size_t>(c)] > s.col_max[static_cast<std::size_t>(c)])
                s.col_max[static_cast<std::size_t>(c)] = row[static_cast<std::size_t>(c)];
        }
    }
    return s;
}

Dataset minmax_apply(const MinMaxScaler& scaler, const Dataset& d) {
    if (static_cast<int>(scaler.col_min.size()) != d.num_cols())
        throw DataError("minmax_apply: scaler/feature dimension mismatch");
    Dataset out(d.num_rows(), d.num_cols());
    for (int r = 0; r < d.num_rows(); ++r) {
        for (int c = 0; c < d.num_cols(); ++c) {
            const double lo = scaler.col_min[static_cast<std::size_t>(c)];
            const double hi = scaler.col_max[static_cast<std::size_t>(c)];
            out.at(r, c) = hi > lo ? (d.at(r, c) - lo) / (hi - lo) : 0.0;
        }
        out.set_label(r, d.label(r));
    }
    out.feature_names = d.feature_names;
    out.provenance = d.provenance.empty() ? "minmax" : d.provenance + "|minmax";
    check_finite(out, "minmax_apply");
    return out;
}

PcaProjector pca_fit(const DatasetView& train, int components) {
    const int n = train.size();
    const int f = train.dataset->num_cols();
    if (components < 1 || components > std::min(n, f))
        throw ConfigError("pca_fit: components must be in [1, min(rows, features)]");

    PcaProjector p;
    p.in_dim = f;
    p.out_dim = components;
    p.mean.assign(static_cast<std::size_t>(f), 0.0);
    for (int i = 0; i < n; ++i) {
        const auto row = train.row(i);
        for (int c = 0; c < f; ++c) p.mean[static_cast<std::size_t>(c)] += row[static_cast<std::size_t>(c)];
    }
    for (double& m : p.mean) m /= n;

    Eigen::MatrixXd centered(n, f);
    for (int i = 0; i < n; ++i) {
        const auto row = train.row(i);
        for (int c = 0; c < f; ++c)
            centered(i, c) = row[static_cast<std::size_t>(c)] - p.mean[static_cast<std::size_t>(c)];
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
    const Eigen::MatrixXd v = svd.matrixV();
    const Eigen::VectorXd sv = svd.singularValues();

    p.components.assign(static_cast<std::size_t>(components) * f, 0.0);
    p.explained_variance.assign(static_cast<std::size_t>(components), 0.0);
    for (int k = 0; k < components; ++k) {
        // Sign convention: the loading with the largest magnitude is positive.
        int arg = 0;
        for (int c = 1; c < f; ++c)
            if (std::abs(v(c, k)) > std::abs(v(arg, k))) arg = c;
        const double sign = v(arg, k) >= 0.0 ? 1.0 : -1.0;
        for (int c = 0; c < f; ++c)
            p.components[static_cast<std::size_t>(k) * f + c] = sign * v(c, k);
        p.explained_variance[static_cast<std::size_t>(k)] =
            n > 1 ? sv(k) * sv(k) / (n - 1.0) : 0.0;
    }
    return p;
}

Dataset pca_apply(const PcaProjector& p, const Dataset& d) {
    if (d.num_cols() != p.in_dim) throw DataError("pca_apply: feature dimension mismatch");
    Dataset out(d.num_rows(), p.out_dim);
    for (int r = 0; r < d.num_rows(); ++r) {
        for (int k = 0; k < p.out_dim; ++k) {
            double acc = 0.0;
            for (int c = 0; c < p.in_dim; ++c)
                acc += (d.at(r, c) - p.mean[static_cast<std::size_t>(c)]) *
                       p.components[static_cast<std::size_t>(k) * p.in_dim + c];
            out.at(r, k) = acc;
        }
        out.set_label(r, d.label(r));
    }
    out.feature_names = default_names(p.out_dim, "pc");
    out.provenance = d.provenance.empty() ? "pca" : d.provenance + "|pca" + std::to_string(p.out_dim);
    check_finite(out, "pca_apply");
    return out;
}

std::vector<SplitSpec> stratified_splits(const Dataset& d, int n_splits, double test_frac,
                                         std::uint64_t seed) {
    if (n_splits < 1) throw ConfigError("stratified_splits: n_splits must be >= 1");
    if (test_frac <= 0.0 || test_frac >= 1.0)
        throw ConfigError("stratified_splits: test_frac must be in (0, 1)");

    std::vector<int> class_rows[2];
    for (int r = 0; r < d.num_rows(); ++r) {
        const int y = d.label(r);
        if (y != 0 && y != 1)
            throw DataError("stratified_splits: label at row " + std::to_string(r) +
                            " is not binary");
        class_rows[y].push_back(r);
    }
    for (const int cls : {0, 1}) {
        if (static_cast<int>(class_rows[cls].size()) < n_splits) {
            std::ostringstream msg;
            msg << "stratified_splits: class " << cls << " has only " << class_rows[cls].size()
                << " samples, need at least " << n_splits;
            throw DataError(msg.str());
        }
    }

    std::vector<SplitSpec> splits;
    std::set<std::vector<int>> seen_test_sets;
    for (int s = 0; s < n_splits; ++s) {
        for (std::uint64_t attempt = 0;; ++attempt) {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(s) * 1024u + attempt));
            SplitSpec spec;
            spec.split_id = s;
            for (const int cls : {0, 1}) {
                std::vector<int> rows = class_rows[cls];
                rng.shuffle(rows);
                const int n_test = static_cast<int>(
                    std::round(test_frac * static_cast<double>(rows.size())));
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    if (static_cast<int>(i) < n_test)
                        spec.test_indices.push_back(rows[i]);
                    else
                        spec.train_indices.push_back(rows[i]);
                }
            }
            std::sort(spec.train_indices.begin(), spec.train_indices.end());
            std::sort(spec.test_indices.begin(), spec.test_indices.end());
            if (!seen_test_sets.insert(spec.test_indices).second) continue;
            for (const int k : {4, 5})
                spec.folds[k] = stratified_folds(d, spec.train_indices, k, fold_seed(seed, s, k));
            splits.push_back(std::move(spec));
            break;
        }
    }
    return splits;
}

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_csv: cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw DataError("load_csv: " + path + " is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    int label_col = -1;
    for (std::size_t c = 0; c < header.size(); ++c)
        if (header[c] == "label") label_col = static_cast<int>(c);
    if (label_col < 0) throw DataError("load_csv: " + path + " has no `label` column");
    const int n_features = static_cast<int>(header.size()) - 1;
    if (n_features < 1) throw DataError("load_csv: " + path + " has no feature columns");

    std::vector<double> values;
    std::vector<int> labels;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        int col = 0;
        while (std::getline(ss, cell, ',')) {
            double v = 0.0;
            const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size()) {
                std::ostringstream msg;
                msg << "load_csv: " << path << ": non-numeric cell \"" << cell << "\" at row "
                    << row << ", column " << header[static_cast<std::size_t>(col)];
                throw DataError(msg.str());
            }
            if (!std::isfinite(v)) {
                std::ostringstream msg;
                msg << "load_csv: " << path << ": non-finite value at row " << row << ", column "
                    << header[static_cast<std::size_t>(col)];
                throw DataError(msg.str());
            }
            if (col == label_col) {
                if (v != 0.0 && v != 1.0) {
                    std::ostringstream msg;
                    msg << "load_csv: " << path << ": label must be 0 or 1, got \"" << cell
                        << "\" at row " << row;
                    throw DataError(msg.str());
                }
                labels.push_back(static_cast<int>(v));
            } else {
                values.push_back(v);
            }
            ++col;
        }
        if (col != static_cast<int>(header.size())) {
            std::ostringstream msg;
            msg << "load_csv: " << path << ": row " << row << " has " << col << " cells, expected "
                << header.size();
            throw DataError(msg.str());
        }
    }
    if (labels.empty()) throw DataError("load_csv: " + path + " has no data rows");

    Dataset d(static_cast<int>(labels.size()), n_features);
    for (int r = 0; r < d.num_rows(); ++r) {
        for (int c = 0; c < n_features; ++c)
            d.at(r, c) = values[static_cast<std::size_t>(r) * n_features + c];
        d.set_label(r, labels[static_cast<std::size_t>(r)]);
    }
    for (std::size_t c = 0; c < header.size(); ++c)
        if (static_cast<int>(c) != label_col) d.feature_names.push_back(header[c]);
    d.provenance = "csv:" + path;
    return d;
}

void save_csv(const Dataset& d, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("save_csv: cannot write " + path);
    const std::vector<std::string> names =
        d.feature_names.empty() ? default_names(d.num_cols(), "x") : d.feature_names;
    for (const std::string& n : names) out << n << ',';
    out << "label\n";
    for (int r = 0; r < d.num_rows(); ++r) {
        for (int c = 0; c < d.num_cols(); ++c) out << format_double(d.at(r, c)) << ',';
        out << d.label(r) << '\n';
    }
    if (!out) throw DataError("save_csv: write failure on " + path);
}

void save_split(const SplitSpec& split, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("save_split: cannot write " + path);
    out << "row_index,role\n";
    for (const int i : split.train_indices) out << i << ",train\n";
    for (const int i : split.test_indices) out << i << ",test\n";
    if (!out) throw DataError("save_split: write failure on " + path);
}

SplitSpec load_split(const std::string& path, int num_rows) {
    std::ifstream in(path);
    if (!in) throw DataError("load_split: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("load_split: " + path + " is empty");
    SplitSpec spec;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::size_t comma = line.find(',');
        if (comma == std::string::npos)
            throw DataError("load_split: " + path + ": malformed row " + std::to_string(row));
        int idx = -1;
        const auto res = std::from_chars(line.data(), line.data() + comma, idx);
        if (res.ec != std::errc{} || idx < 0 || idx >= num_rows)
            throw DataError("load_split: " + path + ": bad row index at row " +
                            std::to_string(row));
        const std::string role = line.substr(comma + 1);
        if (role == "train")
            spec.train_indices.push_back(idx);
        else if (role == "test")
            spec.test_indices.push_back(idx);
        else
            throw DataError("load_split: " + path + ": unknown role \"" + role + "\" at row " +
                            std::to_string(row));
    }
    return spec;
}

}  // namespace qens::data
