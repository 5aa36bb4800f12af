#include "qens/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>
#include <utility>

#include "qens/common.hpp"
#include "qens/cosine.hpp"
#include "qens/ensemble.hpp"
#include "qens/forest.hpp"
#include "qens/simulator.hpp"
#include "qens/variational.hpp"

namespace qens::cli {

namespace fs = std::filesystem;

namespace {

// Seed ladder: every stochastic stage derives its seed from the experiment
// seed and a disjoint index range, so stages stay independent and re-runs
// reproduce byte-identical outputs.
constexpr std::uint64_t kBlobSeedIndex = 100;        // default single-blob generation
constexpr std::uint64_t kSplitSeedBase = 1000;       // + dataset index
constexpr std::uint64_t kRunSeedBase = 3000;         // + dataset*64 + model; then per split
constexpr std::uint64_t kSearchSeedBase = 5000;      // + dataset*64 + model
constexpr std::uint64_t kShotSeedIndex = 9;          // cosine shot streams per run
constexpr std::uint64_t kRowShotSeedBase = 40000;    // + test row, ensemble shot readout

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string iso_utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(sep, start);
        if (pos == std::string::npos) {
            parts.push_back(s.substr(start));
            return parts;
        }
        parts.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

double parse_num(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw DataError(what + ": trailing characters in '" + s + "'");
        return v;
    } catch (const DataError&) {
        throw;
    } catch (const std::exception&) {
        throw DataError(what + ": not a number: '" + s + "'");
    }
}

int parse_int(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used != s.size()) throw DataError(what + ": trailing characters in '" + s + "'");
        return v;
    } catch (const DataError&) {
        throw;
    } catch (const std::exception&) {
        throw DataError(what + ": not an integer: '" + s + "'");
    }
}

/// Empty string for NaN standard errors (the n = 1 case).
std::string se_field(double se) { return std::isnan(se) ? "" : format_double(se); }

cosine::CosineKind to_cosine_kind(ModelKind kind) {
    switch (kind) {
        case ModelKind::qcc: return cosine::CosineKind::qcc;
        case ModelKind::qec: return cosine::CosineKind::qec;
        default: return cosine::CosineKind::qecru;
    }
}

ensemble::EnsembleKind to_ensemble_kind(ModelKind kind) {
    switch (kind) {
        case ModelKind::soft_vote: return ensemble::EnsembleKind::soft_vote;
        case ModelKind::bagging: return ensemble::EnsembleKind::bagging;
        default: return ensemble::EnsembleKind::adaboost;
    }
}

std::string scope_name(ScaleScope scope) {
    return scope == ScaleScope::train ? "train" : "global";
}

std::string experiment_hash(const ExperimentConfig& config, const std::string& dataset_id,
                            const std::string& config_id) {
    std::ostringstream canon;
    canon << "ds=" << dataset_id << ";cfg=" << config_id << ";seed=" << config.seed
          << ";mode=" << (config.mode == cosine::EvalMode::exact ? "exact" : "shots")
          << ";shots=" << config.shots << ";scope=" << scope_name(config.scale_scope)
          << ";splits=" << config.splits << ";tf=" << format_double(config.test_fraction);
    return hex64(fnv1a64(canon.str()));
}

data::Dataset select_columns(const data::Dataset& d, const std::vector<std::string>& names) {
    std::vector<int> cols;
    for (const std::string& name : names) {
        const auto it = std::find(d.feature_names.begin(), d.feature_names.end(), name);
        if (it == d.feature_names.end())
            throw ConfigError("dataset.features: no column named '" + name + "'");
        cols.push_back(static_cast<int>(it - d.feature_names.begin()));
    }
    data::Dataset out(d.num_rows(), static_cast<int>(cols.size()));
    for (int r = 0; r < d.num_rows(); ++r) {
        for (std::size_t c = 0; c < cols.size(); ++c)
            out.at(r, static_cast<int>(c)) = d.at(r, cols[c]);
        out.set_label(r, d.label(r));
    }
    out.feature_names = names;
    out.provenance = d.provenance + "|select" + std::to_string(cols.size());
    return out;
}

/// Key=value;key=value encoding of a hyper-parameter assignment, the search
/// manifest's interchange format.
std::string ensemble_params(const ensemble::GridPoint& point, int epochs) {
    return "lr=" + format_double(point.learning_rate) + ";batch=" +
           std::to_string(point.batch_size) + ";learners=" + std::to_string(point.ensemble_size) +
           ";epochs=" + std::to_string(epochs);
}

std::string forest_params(const forest::ForestConfig& fc) {
    return "ne=" + std::to_string(fc.n_estimators) + ";md=" + std::to_string(fc.max_depth) +
           ";mss=" + std::to_string(fc.min_samples_split) + ";msl=" +
           std::to_string(fc.min_samples_leaf) + ";mf=" + forest::max_features_name(fc.max_features);
}

void apply_params(ModelSpec& spec, const std::string& params) {
    for (const std::string& pair : split_on(params, ';')) {
        const std::size_t eq = pair.find('=');
        if (eq == std::string::npos)
            throw DataError("search manifest: malformed parameter '" + pair + "'");
        const std::string key = pair.substr(0, eq);
        const std::string value = pair.substr(eq + 1);
        if (spec.is_ensemble()) {
            if (key == "lr")
                spec.ens.learner.learning_rate = parse_num(value, "search manifest lr");
            else if (key == "batch")
                spec.ens.learner.batch_size = parse_int(value, "search manifest batch");
            else if (key == "learners")
                spec.ens.num_learners = parse_int(value, "search manifest learners");
            else if (key == "epochs")
                spec.ens.learner.epochs = parse_int(value, "search manifest epochs");
            else
                throw DataError("search manifest: unknown parameter '" + key + "'");
        } else if (spec.kind == ModelKind::forest) {
            if (key == "ne")
                spec.forest.n_estimators = parse_int(value, "search manifest ne");
            else if (key == "md")
                spec.forest.max_depth = parse_int(value, "search manifest md");
            else if (key == "mss")
                spec.forest.min_samples_split = parse_int(value, "search manifest mss");
            else if (key == "msl")
                spec.forest.min_samples_leaf = parse_int(value, "search manifest msl");
            else if (key == "mf")
                spec.forest.max_features = forest::parse_max_features(value);
            else
                throw DataError("search manifest: unknown parameter '" + key + "'");
        } else {
            throw DataError("search manifest: model kind takes no parameters");
        }
    }
}

struct TaskKey {
    int dataset = 0;
    int model = 0;
    int split = 0;
};

/// Per-split run seed: independent per (dataset, model, split).
std::uint64_t run_seed_of(const ExperimentConfig& config, const TaskKey& key) {
    const std::uint64_t model_seed = derive_seed(
        config.seed, kRunSeedBase + static_cast<std::uint64_t>(key.dataset) * 64 +
                         static_cast<std::uint64_t>(key.model));
    return derive_seed(model_seed, static_cast<std::uint64_t>(key.split));
}

bool single_class(const data::DatasetView& view) {
    for (int i = 1; i < view.size(); ++i)
        if (view.label(i) != view.label(0)) return false;
    return view.size() > 0;
}

/// Class-1 probabilities of one resolved model on the test rows.
std::vector<double> evaluate_model(const ExperimentConfig& config, const ModelSpec& spec,
                                   const data::DatasetView& train, const data::DatasetView& test,
                                   std::uint64_t run_seed) {
    if (spec.is_cosine()) {
        cosine::CosineConfig cc = spec.cosine;
        cc.seed = run_seed;
        cosine::EvalOptions opts;
        opts.mode = config.mode;
        opts.shots = config.shots;
        opts.shot_seed = derive_seed(run_seed, kShotSeedIndex);
        return cosine::cosine_predict(to_cosine_kind(spec.kind), cc, train, test, opts);
    }
    if (spec.is_ensemble()) {
        ensemble::EnsembleTrainConfig tc = spec.ens;
        tc.learner.seed = run_seed;
        ensemble::EnsembleTrainResult trained;
        switch (spec.kind) {
            case ModelKind::soft_vote: trained = ensemble::train_soft_vote(train, tc); break;
            case ModelKind::bagging:
                trained = ensemble::train_bagging(train, tc, spec.weighting);
                break;
            default: trained = ensemble::train_adaboost(train, tc); break;
        }
        std::vector<double> probs(static_cast<std::size_t>(test.size()));
        for (int i = 0; i < test.size(); ++i) {
            if (config.mode == cosine::EvalMode::exact) {
                probs[static_cast<std::size_t>(i)] = ensemble::ensemble_predict(trained.model,
                                                                                test.row(i));
            } else {
                probs[static_cast<std::size_t>(i)] = ensemble::ensemble_predict_shots(
                    trained.model, test.row(i), config.shots,
                    derive_seed(run_seed, kRowShotSeedBase + static_cast<std::uint64_t>(i)));
            }
        }
        return probs;
    }
    forest::ForestConfig fc = spec.forest;
    fc.seed = run_seed;
    const forest::ForestModel model = forest::fit_forest(train, fc);
    return model.predict_proba(test);
}

metrics::MetricsRecord score_model(const std::string& model_id, const std::string& config_id,
                                   int split_id, const std::vector<double>& probs,
                                   const data::DatasetView& test, bool single_class_flag) {
    std::vector<int> pred;
    std::vector<int> truth;
    pred.reserve(probs.size());
    truth.reserve(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        pred.push_back(metrics::threshold_label(probs[i]));
        truth.push_back(test.label(static_cast<int>(i)));
    }
    metrics::MetricsRecord record;
    record.model_id = model_id;
    record.config_id = config_id;
    record.split_id = split_id;
    record.accuracy = metrics::accuracy(pred, truth);
    record.f1_weighted = metrics::weighted_f1(pred, truth);
    record.brier = metrics::brier(probs, truth);
    record.single_class_flag = single_class_flag;
    return record;
}

AggregateRow aggregate_rows(const std::string& dataset_id, const std::string& model_id,
                            const std::string& config_id,
                            const std::vector<const ResultRow*>& rows) {
    std::vector<double> acc, f1, brier;
    for (const ResultRow* r : rows) {
        acc.push_back(r->record.accuracy);
        f1.push_back(r->record.f1_weighted);
        brier.push_back(r->record.brier);
    }
    AggregateRow agg;
    agg.dataset_id = dataset_id;
    agg.model_id = model_id;
    agg.config_id = config_id;
    agg.n = static_cast<int>(rows.size());
    agg.accuracy_mean = mean_of(acc);
    agg.accuracy_se = stderr_of(acc);
    agg.f1_mean = mean_of(f1);
    agg.f1_se = stderr_of(f1);
    agg.brier_mean = mean_of(brier);
    agg.brier_se = stderr_of(brier);
    return agg;
}

std::string csv_aggregate_fields(const AggregateRow& agg) {
    return std::to_string(agg.n) + "," + format_double(agg.accuracy_mean) + "," +
           se_field(agg.accuracy_se) + "," + format_double(agg.f1_mean) + "," +
           se_field(agg.f1_se) + "," + format_double(agg.brier_mean) + "," +
           se_field(agg.brier_se);
}

}  // namespace

double mean_of(const std::vector<double>& values) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    double sum = 0.0;
    for (const double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

double stderr_of(const std::vector<double>& values) {
    const std::size_t n = values.size();
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    const double m = mean_of(values);
    double ss = 0.0;
    for (const double v : values) ss += (v - m) * (v - m);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    return sd / std::sqrt(static_cast<double>(n));
}

std::vector<PreparedData> prepare_datasets(const ExperimentConfig& config) {
    std::vector<PreparedData> out;
    const bool train_scope = config.scale_scope == ScaleScope::train;

    std::vector<data::BlobConfig> blob_configs;
    if (config.dataset.kind == DatasetKind::blobs) {
        data::BlobConfig bc = config.dataset.blob;
        if (!config.dataset.blob_seed_explicit) bc.seed = derive_seed(config.seed, kBlobSeedIndex);
        blob_configs.push_back(bc);
    } else if (config.dataset.kind == DatasetKind::blob_grid) {
        blob_configs = data::blob_grid(config.seed);
    }

    if (config.dataset.kind == DatasetKind::csv) {
        data::Dataset base = data::load_csv(config.dataset.path);
        if (!config.dataset.feature_names.empty())
            base = select_columns(base, config.dataset.feature_names);
        PreparedData pd;
        pd.id = fs::path(config.dataset.path).stem().string();
        if (config.dataset.pca_components) pd.id += "_pca" + std::to_string(*config.dataset.pca_components);
        if (!config.dataset.feature_names.empty())
            pd.id += "_sel" + std::to_string(config.dataset.feature_names.size());
        pd.base = std::move(base);
        if (!train_scope) {
            const data::MinMaxScaler scaler = data::minmax_fit(data::DatasetView::all(pd.base));
            pd.base = data::minmax_apply(scaler, pd.base);
        }
        pd.splits = data::stratified_splits(pd.base, config.splits, config.test_fraction,
                                            derive_seed(config.seed, kSplitSeedBase));
        for (const data::SplitSpec& split : pd.splits) {
            data::Dataset prepared = pd.base;
            if (train_scope) {
                const data::DatasetView train_view{&pd.base, split.train_indices};
                prepared = data::minmax_apply(data::minmax_fit(train_view), pd.base);
            }
            if (config.dataset.pca_components) {
                const data::DatasetView train_view{&prepared, split.train_indices};
                const data::PcaProjector proj =
                    data::pca_fit(train_view, *config.dataset.pca_components);
                prepared = data::pca_apply(proj, prepared);
            }
            pd.per_split.push_back(std::move(prepared));
        }
        out.push_back(std::move(pd));
        return out;
    }

    for (std::size_t ci = 0; ci < blob_configs.size(); ++ci) {
        const data::BlobConfig& bc = blob_configs[ci];
        PreparedData pd;
        pd.id = bc.id();
        pd.base = train_scope ? data::make_blobs_raw(bc) : data::make_blobs(bc);
        pd.splits = data::stratified_splits(pd.base, config.splits, config.test_fraction,
                                            derive_seed(config.seed, kSplitSeedBase + ci));
        for (const data::SplitSpec& split : pd.splits) {
            if (train_scope) {
                const data::DatasetView train_view{&pd.base, split.train_indices};
                pd.per_split.push_back(data::minmax_apply(data::minmax_fit(train_view), pd.base));
            } else {
                pd.per_split.push_back(pd.base);
            }
        }
        out.push_back(std::move(pd));
    }
    return out;
}

void check_qubit_budget(const ExperimentConfig& config, int num_features) {
    const int cap = sim::max_qubits();
    for (const ModelSpec& spec : config.models) {
        const std::string id = spec.config_id();
        if (spec.is_cosine()) {
            if (spec.cosine.n_feature < num_features)
                throw ConfigError(id + ": n_feature " + std::to_string(spec.cosine.n_feature) +
                                  " cannot hold the dataset's " + std::to_string(num_features) +
                                  " features");
            const int width = spec.kind == ModelKind::qcc ? 2 * spec.cosine.q_f() + 2
                                                          : spec.cosine.qec_qubit_count();
            if (width > cap)
                throw ResourceError(id + ": needs " + std::to_string(width) +
                                    " qubits, exceeding the simulator cap of " +
                                    std::to_string(cap) +
                                    " qubits (override with QENS_MAX_QUBITS)");
        } else if (spec.is_ensemble()) {
            const int width = variational::learner_qubits(num_features);
            if (width > cap)
                throw ResourceError(id + ": each learner needs " + std::to_string(width) +
                                    " qubits, exceeding the simulator cap of " +
                                    std::to_string(cap) +
                                    " qubits (override with QENS_MAX_QUBITS)");
        }
    }
}

void cmd_gen_blobs(const ExperimentConfig& config) {
    const std::vector<data::BlobConfig> grid = data::blob_grid(config.seed);
    const fs::path root = fs::path(config.out_dir) / "blobs";
    ensure_dir(root);
    for (std::size_t ci = 0; ci < grid.size(); ++ci) {
        const data::Dataset d = data::make_blobs(grid[ci]);
        const fs::path dir = root / grid[ci].id();
        ensure_dir(dir);
        data::save_csv(d, (dir / "data.csv").string());
        const std::vector<data::SplitSpec> splits = data::stratified_splits(
            d, config.splits, config.test_fraction, derive_seed(config.seed, kSplitSeedBase + ci));
        for (const data::SplitSpec& split : splits)
            data::save_split(split,
                             (dir / ("split_" + std::to_string(split.split_id) + ".csv")).string());
    }
}

void cmd_search(const ExperimentConfig& config) {
    if (config.models.empty()) throw ConfigError("search: the config lists no models");
    bool any = false;
    for (const ModelSpec& spec : config.models) any = any || spec.search;
    if (!any) throw ConfigError("search: no model has search enabled");

    const std::vector<PreparedData> prepared = prepare_datasets(config);
    check_qubit_budget(config, prepared.front().per_split.front().num_cols());

    const fs::path search_dir = fs::path(config.out_dir) / "search";
    const fs::path tables_dir = search_dir / "tables";
    ensure_dir(tables_dir);

    std::vector<std::string> manifest_rows;
    for (std::size_t ci = 0; ci < prepared.size(); ++ci) {
        const PreparedData& pd = prepared[ci];
        for (std::size_t mi = 0; mi < config.models.size(); ++mi) {
            const ModelSpec& spec = config.models[mi];
            if (!spec.search) continue;
            const char* model_name = model_kind_name(spec.kind);
            const std::uint64_t search_seed =
                derive_seed(config.seed, kSearchSeedBase + ci * 64 + mi);

            if (spec.is_ensemble()) {
                const std::vector<ensemble::GridPoint> points = spec.grid.enumerate();
                std::vector<std::vector<double>> point_scores(points.size());
                for (const data::SplitSpec& split : pd.splits) {
                    const data::DatasetView train{&pd.per_split[split.split_id],
                                                  split.train_indices};
                    const std::vector<ensemble::GridResult> ranked =
                        ensemble::grid_search(to_ensemble_kind(spec.kind), train,
                                              split.folds.at(4), 4, spec.grid, search_seed,
                                              config.workers);
                    std::unordered_map<std::string, double> by_params;
                    auto table = open_out(tables_dir /
                                          (pd.id + "_" + model_name + "_split" +
                                           std::to_string(split.split_id) + ".csv"));
                    table << "rank,learning_rate,batch_size,num_learners,epochs,"
                             "median_val_accuracy,fold_accuracies\n";
                    for (std::size_t rank = 0; rank < ranked.size(); ++rank) {
                        const ensemble::GridResult& r = ranked[rank];
                        std::string folds;
                        for (const double a : r.fold_accuracies) {
                            if (!folds.empty()) folds += ';';
                            folds += format_double(a);
                        }
                        table << rank + 1 << ',' << format_double(r.point.learning_rate) << ','
                              << r.point.batch_size << ',' << r.point.ensemble_size << ','
                              << spec.grid.epochs << ',' << format_double(r.median_val_accuracy)
                              << ',' << folds << '\n';
                        by_params[ensemble_params(r.point, spec.grid.epochs)] =
                            r.median_val_accuracy;
                    }
                    for (std::size_t pi = 0; pi < points.size(); ++pi)
                        point_scores[pi].push_back(
                            by_params.at(ensemble_params(points[pi], spec.grid.epochs)));
                }
                std::size_t best = 0;
                double best_score = -1.0;
                for (std::size_t pi = 0; pi < points.size(); ++pi) {
                    const double score = mean_of(point_scores[pi]);
                    if (score > best_score) {
                        best_score = score;
                        best = pi;
                    }
                }
                manifest_rows.push_back(pd.id + "," + model_name + "," +
                                        ensemble_params(points[best], spec.grid.epochs) + "," +
                                        format_double(best_score));
            } else if (spec.kind == ModelKind::forest) {
                std::vector<std::string> order;
                std::unordered_map<std::string, std::vector<double>> scores;
                for (const data::SplitSpec& split : pd.splits) {
                    const data::DatasetView train{&pd.per_split[split.split_id],
                                                  split.train_indices};
                    const std::vector<forest::SearchResult> ranked = forest::randomized_search(
                        train, split.folds.at(5), 5, spec.n_iter, search_seed, config.workers);
                    auto table = open_out(tables_dir /
                                          (pd.id + "_" + model_name + "_split" +
                                           std::to_string(split.split_id) + ".csv"));
                    table << "rank,n_estimators,max_depth,min_samples_split,min_samples_leaf,"
                             "max_features,mean_weighted_f1,fold_f1\n";
                    for (std::size_t rank = 0; rank < ranked.size(); ++rank) {
                        const forest::SearchResult& r = ranked[rank];
                        std::string folds;
                        for (const double f : r.fold_f1) {
                            if (!folds.empty()) folds += ';';
                            folds += format_double(f);
                        }
                        table << rank + 1 << ',' << r.config.n_estimators << ','
                              << r.config.max_depth << ',' << r.config.min_samples_split << ','
                              << r.config.min_samples_leaf << ','
                              << forest::max_features_name(r.config.max_features) << ','
                              << format_double(r.mean_weighted_f1) << ',' << folds << '\n';
                        const std::string params = forest_params(r.config);
                        if (!scores.count(params)) order.push_back(params);
                        scores[params].push_back(r.mean_weighted_f1);
                    }
                }
                std::string best;
                double best_score = -1.0;
                for (const std::string& params : order) {
                    const double score = mean_of(scores.at(params));
                    if (score > best_score) {
                        best_score = score;
                        best = params;
                    }
                }
                manifest_rows.push_back(pd.id + "," + model_name + "," + best + "," +
                                        format_double(best_score));
            }
        }
    }

    auto manifest = open_out(search_dir / "manifest.csv");
    manifest << "dataset,model,params,score\n";
    for (const std::string& row : manifest_rows) manifest << row << '\n';
}

ResultsTable cmd_train_eval(const ExperimentConfig& config) {
    if (config.models.empty()) throw ConfigError("train-eval: the config lists no models");
    const std::vector<PreparedData> prepared = prepare_datasets(config);
    check_qubit_budget(config, prepared.front().per_split.front().num_cols());
    ensure_dir(config.out_dir);

    // Resolve search-enabled models against the manifest before any training.
    bool needs_manifest = false;
    for (const ModelSpec& spec : config.models) needs_manifest = needs_manifest || spec.search;
    std::map<std::pair<std::string, std::string>, std::string> manifest;
    const fs::path manifest_path = fs::path(config.out_dir) / "search" / "manifest.csv";
    if (needs_manifest) {
        if (!fs::exists(manifest_path))
            throw ConfigError("train-eval: search manifest " + manifest_path.string() +
                              " not found; run search first");
        const std::string text = read_text(manifest_path);
        const std::vector<std::string> lines = split_on(text, '\n');
        for (std::size_t i = 1; i < lines.size(); ++i) {
            if (lines[i].empty()) continue;
            const std::vector<std::string> cells = split_on(lines[i], ',');
            if (cells.size() != 4)
                throw DataError(manifest_path.string() + ": malformed row '" + lines[i] + "'");
            manifest[{cells[0], cells[1]}] = cells[2];
        }
    }

    const int num_datasets = static_cast<int>(prepared.size());
    const int num_models = static_cast<int>(config.models.size());
    const int num_splits = config.splits;

    // resolved[ci][mi]: the model spec actually trained on dataset ci.
    std::vector<std::vector<ModelSpec>> resolved(static_cast<std::size_t>(num_datasets));
    for (int ci = 0; ci < num_datasets; ++ci) {
        for (int mi = 0; mi < num_models; ++mi) {
            ModelSpec spec = config.models[static_cast<std::size_t>(mi)];
            if (spec.search) {
                const auto it = manifest.find({prepared[static_cast<std::size_t>(ci)].id,
                                               model_kind_name(spec.kind)});
                if (it == manifest.end())
                    throw ConfigError("train-eval: no search manifest entry for dataset '" +
                                      prepared[static_cast<std::size_t>(ci)].id + "' model '" +
                                      model_kind_name(spec.kind) + "' in " +
                                      manifest_path.string() + "; run search first");
                apply_params(spec, it->second);
            }
            resolved[static_cast<std::size_t>(ci)].push_back(std::move(spec));
        }
    }

    const int num_tasks = num_datasets * num_models * num_splits;
    ResultsTable table;
    table.rows.resize(static_cast<std::size_t>(num_tasks));
    parallel_for(num_tasks, config.workers, [&](int task) {
        const TaskKey key{task / (num_models * num_splits),
                          (task / num_splits) % num_models, task % num_splits};
        const PreparedData& pd = prepared[static_cast<std::size_t>(key.dataset)];
        const ModelSpec& spec =
            resolved[static_cast<std::size_t>(key.dataset)][static_cast<std::size_t>(key.model)];
        const data::SplitSpec& split = pd.splits[static_cast<std::size_t>(key.split)];
        const data::Dataset& features = pd.per_split[static_cast<std::size_t>(key.split)];
        const data::DatasetView train{&features, split.train_indices};
        const data::DatasetView test{&features, split.test_indices};
        const std::string config_id = spec.config_id();
        const std::string context = pd.id + "/" + model_kind_name(spec.kind) + "/" + config_id +
                                    "/split" + std::to_string(key.split);
        try {
            const std::vector<double> probs =
                evaluate_model(config, spec, train, test, run_seed_of(config, key));
            ResultRow row;
            row.dataset_id = pd.id;
            row.record = score_model(model_kind_name(spec.kind), config_id, key.split, probs,
                                     test, single_class(train));
            row.config_hash = experiment_hash(config, pd.id, config_id);
            row.seed = config.seed;
            table.rows[static_cast<std::size_t>(task)] = std::move(row);
        } catch (const ConfigError& e) {
            throw ConfigError(context + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError(context + ": " + e.what());
        } catch (const ResourceError& e) {
            throw ResourceError(context + ": " + e.what());
        }
    });

    // Aggregates: one group per (dataset, model entry); each group holds every split.
    for (int ci = 0; ci < num_datasets; ++ci) {
        for (int mi = 0; mi < num_models; ++mi) {
            std::vector<const ResultRow*> group;
            for (int j = 0; j < num_splits; ++j)
                group.push_back(&table.rows[static_cast<std::size_t>(
                    (ci * num_models + mi) * num_splits + j)]);
            const ModelSpec& spec = resolved[static_cast<std::size_t>(ci)][static_cast<std::size_t>(mi)];
            table.aggregates.push_back(aggregate_rows(prepared[static_cast<std::size_t>(ci)].id,
                                                      model_kind_name(spec.kind),
                                                      spec.config_id(), group));
        }
    }

    // Best config per (dataset, model kind) under both orderings, plus t-tests
    // against the forest baseline's best config.
    const std::vector<std::string> orderings = {"accuracy", "f1_weighted"};
    auto group_scores = [&](int ci, int mi, const std::string& metric) {
        std::vector<double> scores;
        for (int j = 0; j < num_splits; ++j) {
            const ResultRow& row =
                table.rows[static_cast<std::size_t>((ci * num_models + mi) * num_splits + j)];
            if (metric == "accuracy")
                scores.push_back(row.record.accuracy);
            else if (metric == "f1_weighted")
                scores.push_back(row.record.f1_weighted);
            else
                scores.push_back(row.record.brier);
        }
        return scores;
    };
    auto agg_mean = [&](int ci, int mi, const std::string& ordering) {
        const AggregateRow& agg = table.aggregates[static_cast<std::size_t>(ci * num_models + mi)];
        return ordering == "accuracy" ? agg.accuracy_mean : agg.f1_mean;
    };
    for (int ci = 0; ci < num_datasets; ++ci) {
        std::vector<std::string> kinds_seen;
        for (int mi = 0; mi < num_models; ++mi) {
            const std::string kind = model_kind_name(config.models[static_cast<std::size_t>(mi)].kind);
            if (std::find(kinds_seen.begin(), kinds_seen.end(), kind) == kinds_seen.end())
                kinds_seen.push_back(kind);
        }
        std::map<std::pair<std::string, std::string>, int> best_entry;
        for (const std::string& ordering : orderings) {
            for (const std::string& kind : kinds_seen) {
                int best_mi = -1;
                for (int mi = 0; mi < num_models; ++mi) {
                    if (model_kind_name(config.models[static_cast<std::size_t>(mi)].kind) != kind)
                        continue;
                    if (best_mi < 0 || agg_mean(ci, mi, ordering) > agg_mean(ci, best_mi, ordering))
                        best_mi = mi;
                }
                best_entry[{ordering, kind}] = best_mi;
                BestConfigRow best;
                best.ordering = ordering;
                best.agg = table.aggregates[static_cast<std::size_t>(ci * num_models + best_mi)];
                table.best.push_back(std::move(best));
            }
        }
        const bool has_forest =
            std::find(kinds_seen.begin(), kinds_seen.end(), "forest") != kinds_seen.end();
        if (!has_forest) continue;
        for (const std::string& ordering : orderings) {
            const int forest_mi = best_entry.at({ordering, "forest"});
            for (const std::string& kind : kinds_seen) {
                if (kind == "forest") continue;
                const int model_mi = best_entry.at({ordering, kind});
                for (const std::string metric : {"accuracy", "f1_weighted", "brier"}) {
                    const std::vector<double> a = group_scores(ci, model_mi, metric);
                    const std::vector<double> b = group_scores(ci, forest_mi, metric);
                    TTestRow row;
                    row.dataset_id = prepared[static_cast<std::size_t>(ci)].id;
                    row.model_id = kind;
                    row.model_config =
                        resolved[static_cast<std::size_t>(ci)][static_cast<std::size_t>(model_mi)]
                            .config_id();
                    row.baseline_config =
                        resolved[static_cast<std::size_t>(ci)][static_cast<std::size_t>(forest_mi)]
                            .config_id();
                    row.ordering = ordering;
                    row.metric = metric;
                    row.test = config.t_test == TTestKind::welch ? metrics::welch_t_test(a, b)
                                                                 : metrics::paired_t_test(a, b);
                    row.significant = row.test.p < 0.05;
                    table.ttests.push_back(std::move(row));
                }
            }
        }
    }

    // Persist. Only results.csv carries the (excluded-from-comparison) timestamp.
    {
        auto out = open_out(fs::path(config.out_dir) / "results.csv");
        out << "# run " << iso_utc_now() << '\n';
        out << "dataset,model,config,split,accuracy,f1_weighted,brier,single_class,config_hash,"
               "seed\n";
        for (const ResultRow& row : table.rows) {
            out << row.dataset_id << ',' << row.record.model_id << ',' << row.record.config_id
                << ',' << row.record.split_id << ',' << format_double(row.record.accuracy) << ','
                << format_double(row.record.f1_weighted) << ',' << format_double(row.record.brier)
                << ',' << (row.record.single_class_flag ? 1 : 0) << ',' << row.config_hash << ','
                << row.seed << '\n';
        }
    }
    {
        auto out = open_out(fs::path(config.out_dir) / "aggregates.csv");
        out << "dataset,model,config,n,accuracy_mean,accuracy_stderr,f1_weighted_mean,"
               "f1_weighted_stderr,brier_mean,brier_stderr\n";
        for (const AggregateRow& agg : table.aggregates)
            out << agg.dataset_id << ',' << agg.model_id << ',' << agg.config_id << ','
                << csv_aggregate_fields(agg) << '\n';
    }
    {
        auto out = open_out(fs::path(config.out_dir) / "best_configs.csv");
        out << "dataset,model,ordering,config,n,accuracy_mean,accuracy_stderr,f1_weighted_mean,"
               "f1_weighted_stderr,brier_mean,brier_stderr\n";
        for (const BestConfigRow& best : table.best)
            out << best.agg.dataset_id << ',' << best.agg.model_id << ',' << best.ordering << ','
                << best.agg.config_id << ',' << csv_aggregate_fields(best.agg) << '\n';
    }
    {
        auto out = open_out(fs::path(config.out_dir) / "ttests.csv");
        out << "dataset,model,model_config,baseline_config,ordering,metric,t,p,dof,significant\n";
        for (const TTestRow& row : table.ttests)
            out << row.dataset_id << ',' << row.model_id << ',' << row.model_config << ','
                << row.baseline_config << ',' << row.ordering << ',' << row.metric << ','
                << format_double(row.test.t) << ',' << format_double(row.test.p) << ','
                << format_double(row.test.dof) << ',' << (row.significant ? 1 : 0) << '\n';
    }
    {
        auto out = open_out(fs::path(config.out_dir) / "run_manifest.txt");
        out << "seed=" << config.seed << '\n'
            << "mode=" << (config.mode == cosine::EvalMode::exact ? "exact" : "shots") << '\n'
            << "shots=" << config.shots << '\n'
            << "workers=" << config.workers << '\n'
            << "splits=" << config.splits << '\n'
            << "test_fraction=" << format_double(config.test_fraction) << '\n'
            << "scale_scope=" << scope_name(config.scale_scope) << '\n'
            << "t_test=" << (config.t_test == TTestKind::welch ? "welch" : "paired") << '\n';
        for (const PreparedData& pd : prepared) out << "dataset=" << pd.id << '\n';
        for (int ci = 0; ci < num_datasets; ++ci)
            for (int mi = 0; mi < num_models; ++mi) {
                const ModelSpec& spec =
                    resolved[static_cast<std::size_t>(ci)][static_cast<std::size_t>(mi)];
                out << "model=" << prepared[static_cast<std::size_t>(ci)].id << ':'
                    << spec.config_id() << ':'
                    << experiment_hash(config, prepared[static_cast<std::size_t>(ci)].id,
                                       spec.config_id())
                    << '\n';
            }
    }
    return table;
}

void cmd_report(const std::string& results_dir) {
    const fs::path dir(results_dir);
    const fs::path results_path = dir / "results.csv";
    if (!fs::exists(results_path))
        throw DataError("report: no results.csv in " + dir.string());

    struct ParsedRow {
        std::string dataset, model, config;
        double accuracy = 0.0, f1 = 0.0, brier = 0.0;
    };
    std::vector<ParsedRow> rows;
    {
        const std::vector<std::string> lines = split_on(read_text(results_path), '\n');
        bool header_seen = false;
        for (const std::string& line : lines) {
            if (line.empty() || line[0] == '#') continue;
            if (!header_seen) {
                header_seen = true;
                continue;
            }
            const std::vector<std::string> cells = split_on(line, ',');
            if (cells.size() != 10)
                throw DataError("report: malformed results row '" + line + "'");
            ParsedRow row;
            row.dataset = cells[0];
            row.model = cells[1];
            row.config = cells[2];
            row.accuracy = parse_num(cells[4], "report accuracy");
            row.f1 = parse_num(cells[5], "report f1_weighted");
            row.brier = parse_num(cells[6], "report brier");
            rows.push_back(std::move(row));
        }
    }
    if (rows.empty()) throw DataError("report: results.csv has no data rows");

    // Stars mark best-config models whose accuracy-ordering t-test against the
    // forest baseline is significant for the starred metric.
    std::map<std::string, bool> significant;
    const fs::path ttests_path = dir / "ttests.csv";
    if (fs::exists(ttests_path)) {
        const std::vector<std::string> lines = split_on(read_text(ttests_path), '\n');
        for (std::size_t i = 1; i < lines.size(); ++i) {
            if (lines[i].empty()) continue;
            const std::vector<std::string> cells = split_on(lines[i], ',');
            if (cells.size() != 10)
                throw DataError("report: malformed ttests row '" + lines[i] + "'");
            if (cells[4] != "accuracy") continue;  // accuracy ordering picks the starred config
            significant[cells[0] + '|' + cells[1] + '|' + cells[2] + '|' + cells[5]] =
                cells[9] == "1";
        }
    }

    struct Group {
        std::string dataset, model, config;
        std::vector<double> accuracy, f1, brier;
    };
    std::vector<Group> groups;
    std::map<std::string, std::size_t> group_index;
    std::vector<std::string> dataset_order;
    for (const ParsedRow& row : rows) {
        const std::string key = row.dataset + '|' + row.model + '|' + row.config;
        if (!group_index.count(key)) {
            group_index[key] = groups.size();
            groups.push_back({row.dataset, row.model, row.config, {}, {}, {}});
            if (std::find(dataset_order.begin(), dataset_order.end(), row.dataset) ==
                dataset_order.end())
                dataset_order.push_back(row.dataset);
        }
        Group& g = groups[group_index.at(key)];
        g.accuracy.push_back(row.accuracy);
        g.f1.push_back(row.f1);
        g.brier.push_back(row.brier);
    }

    auto star_of = [&](const Group& g, const char* metric) {
        const auto it = significant.find(g.dataset + '|' + g.model + '|' + g.config + '|' + metric);
        return it != significant.end() && it->second ? "*" : "";
    };
    auto cell = [&](const std::vector<double>& v, const std::string& star) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(4) << mean_of(v);
        const double se = stderr_of(v);
        if (!std::isnan(se)) s << " +/- " << std::fixed << std::setprecision(4) << se;
        s << star;
        return s.str();
    };

    {
        auto out = open_out(dir / "summary.txt");
        out << "results: " << rows.size() << " rows, " << groups.size() << " model configs, "
            << dataset_order.size() << " dataset(s); * = p < 0.05 vs. the forest baseline\n";
        for (const std::string& ds : dataset_order) {
            out << "\ndataset " << ds << '\n';
            for (const Group& g : groups) {
                if (g.dataset != ds) continue;
                out << "  " << g.model << ' ' << g.config << " (n=" << g.accuracy.size() << ")\n"
                    << "    accuracy    " << cell(g.accuracy, star_of(g, "accuracy")) << '\n'
                    << "    f1_weighted " << cell(g.f1, star_of(g, "f1_weighted")) << '\n'
                    << "    brier       " << cell(g.brier, star_of(g, "brier")) << '\n';
            }
        }
    }
    {
        // Per (dataset, model): the best config by mean accuracy feeds the plot data.
        auto out = open_out(dir / "plot_data.csv");
        out << "model,metric,mean,stderr\n";
        std::vector<std::pair<std::string, std::string>> model_order;
        for (const Group& g : groups) {
            const std::pair<std::string, std::string> key{g.dataset, g.model};
            if (std::find(model_order.begin(), model_order.end(), key) == model_order.end())
                model_order.push_back(key);
        }
        for (const auto& [ds, model] : model_order) {
            const Group* best = nullptr;
            for (const Group& g : groups) {
                if (g.dataset != ds || g.model != model) continue;
                if (!best || mean_of(g.accuracy) > mean_of(best->accuracy)) best = &g;
            }
            const std::string label = dataset_order.size() > 1 ? ds + "/" + model : model;
            const auto emit = [&](const char* metric, const std::vector<double>& v) {
                out << label << ',' << metric << ',' << format_double(mean_of(v)) << ','
                    << se_field(stderr_of(v)) << '\n';
            };
            emit("accuracy", best->accuracy);
            emit("f1_weighted", best->f1);
            emit("brier", best->brier);
        }
    }
}

void cmd_predict(const ExperimentConfig& config) {
    if (!config.predict)
        throw ConfigError("predict: the config has no predict section (manifest + input)");

    const ensemble::EnsembleModel model =
        ensemble::parse_ensemble(read_text(config.predict->manifest));
    if (model.learner_qubit_count() > sim::max_qubits())
        throw ResourceError("predict: each learner needs " +
                            std::to_string(model.learner_qubit_count()) +
                            " qubits, exceeding the simulator cap of " +
                            std::to_string(sim::max_qubits()) +
                            " qubits (override with QENS_MAX_QUBITS)");

    // Feature rows with an optional label column, which is ignored if present.
    const std::vector<std::string> lines = split_on(read_text(config.predict->input), '\n');
    if (lines.empty() || lines[0].empty())
        throw DataError("predict: " + config.predict->input + " is empty");
    const std::vector<std::string> header = split_on(lines[0], ',');
    int label_col = -1;
    for (std::size_t c = 0; c < header.size(); ++c)
        if (header[c] == "label") label_col = static_cast<int>(c);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const std::vector<std::string> cells = split_on(lines[i], ',');
        if (cells.size() != header.size())
            throw DataError("predict: row " + std::to_string(i + 1) + " has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(header.size()));
        std::vector<double> x;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (static_cast<int>(c) == label_col) continue;
            const double v =
                parse_num(cells[c], "predict: row " + std::to_string(i + 1) + " column " +
                                        std::to_string(c + 1));
            if (!std::isfinite(v))
                throw DataError("predict: non-finite value at row " + std::to_string(i + 1));
            x.push_back(v);
        }
        rows.push_back(std::move(x));
    }
    if (rows.empty()) throw DataError("predict: " + config.predict->input + " has no data rows");

    const int num_features = static_cast<int>(rows.front().size());
    if (variational::learner_qubits(num_features) != model.learner_qubit_count())
        throw ConfigError("predict: input has " + std::to_string(num_features) +
                          " features, but the manifest's learners encode " +
                          std::to_string(model.learner_qubit_count()) + " qubits");

    ensure_dir(config.out_dir);
    auto out = open_out(fs::path(config.out_dir) / "predictions.csv");
    out << "row,probability,label\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double p =
            config.mode == cosine::EvalMode::exact
                ? ensemble::ensemble_predict(model, rows[i])
                : ensemble::ensemble_predict_shots(
                      model, rows[i], config.shots,
                      derive_seed(config.seed, kRowShotSeedBase + static_cast<std::uint64_t>(i)));
        out << i << ',' << format_double(p) << ',' << metrics::threshold_label(p) << '\n';
    }
}

}  // namespace qens::cli
