#include "qens/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

#include "json.hpp"
#include "qens/common.hpp"

namespace qens::cli {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw ConfigError(path + ": " + msg);
}

std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed) {
            if (it.key() == k) {
                known = true;
                break;
            }
        }
        if (!known) fail(join(path, it.key()), "unknown key");
    }
}

const json* find(const json& obj, const char* key) {
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

double num_or(const json& obj, const std::string& path, const char* key, double dflt) {
    const json* v = find(obj, key);
    if (!v) return dflt;
    if (!v->is_number()) fail(join(path, key), "expected a number");
    return v->get<double>();
}

int int_or(const json& obj, const std::string& path, const char* key, int dflt) {
    const json* v = find(obj, key);
    if (!v) return dflt;
    if (!v->is_number_integer()) fail(join(path, key), "expected an integer");
    return v->get<int>();
}

std::uint64_t u64_or(const json& obj, const std::string& path, const char* key,
                     std::uint64_t dflt) {
    const json* v = find(obj, key);
    if (!v) return dflt;
    if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() &&
                                    v->get<std::int64_t>() < 0))
        fail(join(path, key), "expected a non-negative integer");
    return v->get<std::uint64_t>();
}

bool bool_or(const json& obj, const std::string& path, const char* key, bool dflt) {
    const json* v = find(obj, key);
    if (!v) return dflt;
    if (!v->is_boolean()) fail(join(path, key), "expected true or false");
    return v->get<bool>();
}

std::string str_or(const json& obj, const std::string& path, const char* key,
                   const std::string& dflt) {
    const json* v = find(obj, key);
    if (!v) return dflt;
    if (!v->is_string()) fail(join(path, key), "expected a string");
    return v->get<std::string>();
}

std::string req_str(const json& obj, const std::string& path, const char* key) {
    const json* v = find(obj, key);
    if (!v) fail(join(path, key), "missing required key");
    if (!v->is_string()) fail(join(path, key), "expected a string");
    return v->get<std::string>();
}

std::vector<double> num_array_or(const json& obj, const std::string& path, const char* key,
                                 std::vector<double> dflt) {
    const json* v = find(obj, key);
    if (!v) return dflt;
    if (!v->is_array() || v->empty()) fail(join(path, key), "expected a non-empty array");
    std::vector<double> out;
    for (const auto& item : *v) {
        if (!item.is_number()) fail(join(path, key), "expected numbers");
        out.push_back(item.get<double>());
    }
    return out;
}

std::vector<int> int_array_or(const json& obj, const std::string& path, const char* key,
                              std::vector<int> dflt) {
    const json* v = find(obj, key);
    if (!v) return dflt;
    if (!v->is_array() || v->empty()) fail(join(path, key), "expected a non-empty array");
    std::vector<int> out;
    for (const auto& item : *v) {
        if (!item.is_number_integer()) fail(join(path, key), "expected integers");
        out.push_back(item.get<int>());
    }
    return out;
}

DatasetSpec parse_dataset(const json& d, const std::string& path) {
    if (!d.is_object()) fail(path, "expected an object");
    DatasetSpec spec;
    const std::string kind = req_str(d, path, "kind");
    if (kind == "blobs") {
        spec.kind = DatasetKind::blobs;
        check_keys(d, path, {"kind", "cluster_std", "p1", "p2", "n_samples", "seed"});
        spec.blob.cluster_std = num_or(d, path, "cluster_std", spec.blob.cluster_std);
        spec.blob.p1 = num_or(d, path, "p1", spec.blob.p1);
        spec.blob.p2 = num_or(d, path, "p2", spec.blob.p2);
        spec.blob.n_samples = int_or(d, path, "n_samples", spec.blob.n_samples);
        if (find(d, "seed")) {
            spec.blob.seed = u64_or(d, path, "seed", 0);
            spec.blob_seed_explicit = true;
        }
        if (spec.blob.cluster_std <= 0.0) fail(join(path, "cluster_std"), "must be positive");
        if (spec.blob.n_samples < 2 || spec.blob.n_samples % 2 != 0)
            fail(join(path, "n_samples"), "must be even and >= 2");
    } else if (kind == "blob_grid") {
        spec.kind = DatasetKind::blob_grid;
        check_keys(d, path, {"kind"});
    } else if (kind == "csv") {
        spec.kind = DatasetKind::csv;
        check_keys(d, path, {"kind", "path", "pca_components", "features"});
        spec.path = req_str(d, path, "path");
        if (find(d, "pca_components")) {
            const int f = int_or(d, path, "pca_components", 0);
            if (f < 1) fail(join(path, "pca_components"), "must be >= 1");
            spec.pca_components = f;
        }
        if (const json* feats = find(d, "features")) {
            if (!feats->is_array() || feats->empty())
                fail(join(path, "features"), "expected a non-empty array of column names");
            for (const auto& item : *feats) {
                if (!item.is_string()) fail(join(path, "features"), "expected strings");
                spec.feature_names.push_back(item.get<std::string>());
            }
        }
        if (spec.pca_components && !spec.feature_names.empty())
            fail(path, "pca_components and features are mutually exclusive");
    } else {
        fail(join(path, "kind"), "unknown dataset kind '" + kind +
                                     "' (expected blobs, blob_grid, or csv)");
    }
    return spec;
}

ensemble::GridSpec parse_grid(const json& g, const std::string& path) {
    if (!g.is_object()) fail(path, "expected an object");
    check_keys(g, path, {"learning_rates", "batch_sizes", "ensemble_sizes", "epochs"});
    ensemble::GridSpec spec;
    spec.learning_rates = num_array_or(g, path, "learning_rates", spec.learning_rates);
    spec.batch_sizes = int_array_or(g, path, "batch_sizes", spec.batch_sizes);
    spec.ensemble_sizes = int_array_or(g, path, "ensemble_sizes", spec.ensemble_sizes);
    spec.epochs = int_or(g, path, "epochs", spec.epochs);
    for (const double lr : spec.learning_rates)
        if (lr <= 0.0) fail(join(path, "learning_rates"), "must be positive");
    for (const int b : spec.batch_sizes)
        if (b < 1) fail(join(path, "batch_sizes"), "must be >= 1");
    for (const int s : spec.ensemble_sizes)
        if (s < 1) fail(join(path, "ensemble_sizes"), "must be >= 1");
    if (spec.epochs < 1) fail(join(path, "epochs"), "must be >= 1");
    return spec;
}

ModelSpec parse_model(const json& m, const std::string& path) {
    if (!m.is_object()) fail(path, "expected an object");
    ModelSpec spec;
    const std::string kind = req_str(m, path, "kind");
    try {
        spec.kind = parse_model_kind(kind);
    } catch (const ConfigError& e) {
        fail(join(path, "kind"), e.what());
    }
    spec.search = bool_or(m, path, "search", false);

    if (spec.is_cosine()) {
        check_keys(m, path, {"kind", "search", "d", "n_train", "n_swap", "n_feature"});
        if (spec.search) fail(join(path, "search"), "cosine classifiers have no search grid");
        if (spec.kind != ModelKind::qcc) {
            spec.cosine.d = 1;
            spec.cosine.n_train = 2;
        }
        spec.cosine.d = int_or(m, path, "d", spec.cosine.d);
        spec.cosine.n_train = int_or(m, path, "n_train", spec.cosine.n_train);
        spec.cosine.n_swap = int_or(m, path, "n_swap", spec.cosine.n_swap);
        spec.cosine.n_feature = int_or(m, path, "n_feature", spec.cosine.n_feature);
        if (spec.kind == ModelKind::qcc && spec.cosine.d != 0)
            fail(join(path, "d"), "qcc has no control register; d must be 0");
        try {
            spec.cosine.validate();
        } catch (const ConfigError& e) {
            fail(path, e.what());
        }
    } else if (spec.is_ensemble()) {
        check_keys(m, path, {"kind", "search", "learning_rate", "batch_size", "epochs",
                             "num_learners", "weighting", "grid"});
        auto& tc = spec.ens.learner;
        tc.learning_rate = num_or(m, path, "learning_rate", tc.learning_rate);
        tc.batch_size = int_or(m, path, "batch_size", tc.batch_size);
        tc.epochs = int_or(m, path, "epochs", tc.epochs);
        spec.ens.num_learners = int_or(m, path, "num_learners", 3);
        if (tc.learning_rate <= 0.0) fail(join(path, "learning_rate"), "must be positive");
        if (tc.batch_size < 1) fail(join(path, "batch_size"), "must be >= 1");
        if (tc.epochs < 1) fail(join(path, "epochs"), "must be >= 1");
        if (spec.ens.num_learners < 1) fail(join(path, "num_learners"), "must be >= 1");
        if (find(m, "weighting")) {
            if (spec.kind != ModelKind::bagging)
                fail(join(path, "weighting"), "only bagging takes a weighting");
            const std::string w = str_or(m, path, "weighting", "uniform");
            if (w == "uniform")
                spec.weighting = ensemble::BaggingWeighting::uniform;
            else if (w == "train_accuracy")
                spec.weighting = ensemble::BaggingWeighting::train_accuracy;
            else
                fail(join(path, "weighting"), "expected uniform or train_accuracy");
        }
        if (const json* g = find(m, "grid")) spec.grid = parse_grid(*g, join(path, "grid"));
    } else {
        check_keys(m, path, {"kind", "search", "n_estimators", "max_depth", "min_samples_split",
                             "min_samples_leaf", "max_features", "n_iter"});
        auto& fc = spec.forest;
        fc.n_estimators = int_or(m, path, "n_estimators", fc.n_estimators);
        fc.max_depth = int_or(m, path, "max_depth", fc.max_depth);
        fc.min_samples_split = int_or(m, path, "min_samples_split", fc.min_samples_split);
        fc.min_samples_leaf = int_or(m, path, "min_samples_leaf", fc.min_samples_leaf);
        if (find(m, "max_features")) {
            try {
                fc.max_features = forest::parse_max_features(str_or(m, path, "max_features", ""));
            } catch (const ConfigError& e) {
                fail(join(path, "max_features"), e.what());
            }
        }
        spec.n_iter = int_or(m, path, "n_iter", spec.n_iter);
        if (spec.n_iter < 1) fail(join(path, "n_iter"), "must be >= 1");
        try {
            fc.validate();
        } catch (const ConfigError& e) {
            fail(path, e.what());
        }
    }
    return spec;
}

}  // namespace

const char* model_kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::qcc: return "qcc";
        case ModelKind::qec: return "qec";
        case ModelKind::qecru: return "qecru";
        case ModelKind::soft_vote: return "soft_vote";
        case ModelKind::bagging: return "bagging";
        case ModelKind::adaboost: return "adaboost";
        case ModelKind::forest: return "forest";
    }
    return "?";
}

ModelKind parse_model_kind(const std::string& name) {
    if (name == "qcc") return ModelKind::qcc;
    if (name == "qec") return ModelKind::qec;
    if (name == "qecru") return ModelKind::qecru;
    if (name == "soft_vote") return ModelKind::soft_vote;
    if (name == "bagging") return ModelKind::bagging;
    if (name == "adaboost") return ModelKind::adaboost;
    if (name == "forest") return ModelKind::forest;
    throw ConfigError("unknown model kind '" + name +
                      "' (expected qcc, qec, qecru, soft_vote, bagging, adaboost, or forest)");
}

bool ModelSpec::is_cosine() const {
    return kind == ModelKind::qcc || kind == ModelKind::qec || kind == ModelKind::qecru;
}

bool ModelSpec::is_ensemble() const {
    return kind == ModelKind::soft_vote || kind == ModelKind::bagging ||
           kind == ModelKind::adaboost;
}

std::string ModelSpec::config_id() const {
    const std::string name = model_kind_name(kind);
    if (is_cosine()) return name + "_" + cosine.id();
    if (is_ensemble()) {
        std::string id = name + "_lr" + format_double(ens.learner.learning_rate) + "_b" +
                         std::to_string(ens.learner.batch_size) + "_l" +
                         std::to_string(ens.num_learners) + "_e" +
                         std::to_string(ens.learner.epochs);
        if (kind == ModelKind::bagging && weighting == ensemble::BaggingWeighting::train_accuracy)
            id += "_acc";
        return id;
    }
    return forest.id();
}

ExperimentConfig parse_config(const std::string& text, const std::string& source_name) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1, col = 1;
        const std::size_t stop = e.byte == 0 ? 0 : std::min(e.byte - 1, text.size());
        for (std::size_t i = 0; i < stop; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError(source_name + ":" + std::to_string(line) + ":" + std::to_string(col) +
                          ": " + e.what());
    }
    if (!root.is_object()) throw ConfigError(source_name + ": top level must be a JSON object");

    check_keys(root, "", {"seed", "workers", "mode", "shots", "out_dir", "splits",
                          "test_fraction", "scale_scope", "t_test", "dataset", "models",
                          "predict"});

    ExperimentConfig config;
    config.seed = u64_or(root, "", "seed", config.seed);
    config.workers = int_or(root, "", "workers", config.workers);
    if (config.workers < 1) fail("workers", "must be >= 1");
    const std::string mode = str_or(root, "", "mode", "exact");
    if (mode == "exact")
        config.mode = cosine::EvalMode::exact;
    else if (mode == "shots")
        config.mode = cosine::EvalMode::shots;
    else
        fail("mode", "expected exact or shots");
    config.shots = int_or(root, "", "shots", 8192);
    if (config.shots < 1) fail("shots", "must be >= 1");
    config.out_dir = str_or(root, "", "out_dir", config.out_dir);
    config.splits = int_or(root, "", "splits", config.splits);
    if (config.splits < 1) fail("splits", "must be >= 1");
    config.test_fraction = num_or(root, "", "test_fraction", config.test_fraction);
    if (!(config.test_fraction > 0.0 && config.test_fraction < 1.0))
        fail("test_fraction", "must lie strictly between 0 and 1");
    const std::string scope = str_or(root, "", "scale_scope", "train");
    if (scope == "train")
        config.scale_scope = ScaleScope::train;
    else if (scope == "global")
        config.scale_scope = ScaleScope::global;
    else
        fail("scale_scope", "expected train or global");
    const std::string ttest = str_or(root, "", "t_test", "welch");
    if (ttest == "welch")
        config.t_test = TTestKind::welch;
    else if (ttest == "paired")
        config.t_test = TTestKind::paired;
    else
        fail("t_test", "expected welch or paired");

    if (const json* d = find(root, "dataset")) config.dataset = parse_dataset(*d, "dataset");
    if (const json* ms = find(root, "models")) {
        if (!ms->is_array()) fail("models", "expected an array");
        if (ms->size() > 64) fail("models", "at most 64 model entries are supported");
        int i = 0;
        for (const auto& m : *ms) {
            config.models.push_back(parse_model(m, "models[" + std::to_string(i) + "]"));
            ++i;
        }
        // The search manifest keys on (dataset, kind), so a second searched
        // entry of the same kind would be indistinguishable.
        for (std::size_t a = 0; a < config.models.size(); ++a)
            for (std::size_t b = a + 1; b < config.models.size(); ++b)
                if (config.models[a].search && config.models[b].search &&
                    config.models[a].kind == config.models[b].kind)
                    fail("models[" + std::to_string(b) + "]",
                         std::string("duplicate search entry for kind '") +
                             model_kind_name(config.models[b].kind) + "'");
    }
    if (const json* p = find(root, "predict")) {
        if (!p->is_object()) fail("predict", "expected an object");
        check_keys(*p, "predict", {"manifest", "input"});
        PredictSpec spec;
        spec.manifest = req_str(*p, "predict", "manifest");
        spec.input = req_str(*p, "predict", "input");
        config.predict = spec;
    }
    return config;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path);
}

}  // namespace qens::cli
