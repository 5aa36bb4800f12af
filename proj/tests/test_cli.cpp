#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "qens/common.hpp"
#include "qens/config.hpp"
#include "qens/ensemble.hpp"
#include "qens/harness.hpp"
#include "qens/simulator.hpp"

using namespace qens;
using namespace qens::cli;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out.good());
    out << text;
}

std::vector<std::string> data_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty() && line[0] != '#') lines.push_back(line);
    return lines;
}

std::vector<std::string> cells_of(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            cells.push_back(line.substr(start));
            return cells;
        }
        cells.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

/// A separable two-blob experiment small enough for fast training.
ExperimentConfig small_config(const std::string& out_dir) {
    ExperimentConfig c;
    c.seed = 11;
    c.workers = 2;
    c.splits = 3;
    c.out_dir = out_dir;
    c.dataset.kind = DatasetKind::blobs;
    c.dataset.blob.cluster_std = 0.1;
    c.dataset.blob.p1 = 0.3;
    c.dataset.blob.p2 = 1.0;
    c.dataset.blob.n_samples = 20;

    ModelSpec qcc;
    qcc.kind = ModelKind::qcc;
    qcc.cosine.d = 0;
    qcc.cosine.n_train = 1;
    c.models.push_back(qcc);

    ModelSpec bagging;
    bagging.kind = ModelKind::bagging;
    bagging.ens.num_learners = 2;
    bagging.ens.learner.learning_rate = 0.1;
    bagging.ens.learner.batch_size = 4;
    bagging.ens.learner.epochs = 4;
    c.models.push_back(bagging);

    ModelSpec forest;
    forest.kind = ModelKind::forest;
    forest.forest.n_estimators = 15;
    forest.forest.max_depth = 4;
    c.models.push_back(forest);
    return c;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(QENS_BIN) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("config parses a full document") {
    const std::string text = R"({
        "seed": 7,
        "workers": 3,
        "mode": "shots",
        "shots": 512,
        "out_dir": "runs/demo",
        "splits": 4,
        "test_fraction": 0.25,
        "scale_scope": "global",
        "t_test": "paired",
        "dataset": {"kind": "blobs", "cluster_std": 0.5, "p1": 0.3, "p2": 1.0,
                    "n_samples": 50, "seed": 99},
        "models": [
            {"kind": "qcc", "n_feature": 2},
            {"kind": "qec", "d": 2, "n_train": 4, "n_swap": 2, "n_feature": 4},
            {"kind": "soft_vote", "learning_rate": 0.01, "batch_size": 2, "epochs": 20,
             "num_learners": 5},
            {"kind": "bagging", "weighting": "train_accuracy", "search": true,
             "grid": {"learning_rates": [0.1], "batch_sizes": [2, 4],
                      "ensemble_sizes": [1, 2, 3], "epochs": 10}},
            {"kind": "forest", "n_estimators": 200, "max_depth": 9, "max_features": "log2",
             "search": true, "n_iter": 5}
        ],
        "predict": {"manifest": "model.txt", "input": "rows.csv"}
    })";
    const ExperimentConfig c = parse_config(text, "cfg");
    CHECK(c.seed == 7);
    CHECK(c.workers == 3);
    CHECK(c.mode == cosine::EvalMode::shots);
    CHECK(c.shots == 512);
    CHECK(c.out_dir == "runs/demo");
    CHECK(c.splits == 4);
    CHECK(c.test_fraction == doctest::Approx(0.25));
    CHECK(c.scale_scope == ScaleScope::global);
    CHECK(c.t_test == TTestKind::paired);
    CHECK(c.dataset.kind == DatasetKind::blobs);
    CHECK(c.dataset.blob.cluster_std == doctest::Approx(0.5));
    CHECK(c.dataset.blob.n_samples == 50);
    CHECK(c.dataset.blob.seed == 99);
    CHECK(c.dataset.blob_seed_explicit);
    REQUIRE(c.models.size() == 5);
    CHECK(c.models[0].kind == ModelKind::qcc);
    CHECK(c.models[0].cosine.d == 0);
    CHECK(c.models[1].cosine.d == 2);
    CHECK(c.models[1].cosine.n_train == 4);
    CHECK(c.models[1].cosine.n_swap == 2);
    CHECK(c.models[1].cosine.n_feature == 4);
    CHECK(c.models[2].ens.learner.learning_rate == doctest::Approx(0.01));
    CHECK(c.models[2].ens.learner.batch_size == 2);
    CHECK(c.models[2].ens.learner.epochs == 20);
    CHECK(c.models[2].ens.num_learners == 5);
    CHECK(c.models[3].weighting == ensemble::BaggingWeighting::train_accuracy);
    CHECK(c.models[3].search);
    CHECK(c.models[3].grid.learning_rates == std::vector<double>{0.1});
    CHECK(c.models[3].grid.batch_sizes == std::vector<int>{2, 4});
    CHECK(c.models[3].grid.ensemble_sizes == std::vector<int>{1, 2, 3});
    CHECK(c.models[3].grid.epochs == 10);
    CHECK(c.models[4].forest.n_estimators == 200);
    CHECK(c.models[4].forest.max_depth == 9);
    CHECK(c.models[4].forest.max_features == forest::MaxFeatures::log2_of);
    CHECK(c.models[4].n_iter == 5);
    REQUIRE(c.predict.has_value());
    CHECK(c.predict->manifest == "model.txt");
    CHECK(c.predict->input == "rows.csv");
}

TEST_CASE("config errors carry the line or the key path") {
    // Unterminated object on line 3.
    const std::string broken = "{\n  \"seed\": 1,\n  \"workers\": \n}";
    try {
        parse_config(broken, "cfg");
        FAIL("expected a parse error");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("cfg:") != std::string::npos);
        CHECK(msg.find(":4:") != std::string::npos);
    }

    auto message_of = [](const std::string& text) {
        try {
            parse_config(text, "cfg");
            return std::string("(no error)");
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
    };
    CHECK(message_of(R"({"models": [{"kind": "bagging", "learning_rte": 0.1}]})")
              .find("models[0].learning_rte") != std::string::npos);
    CHECK(message_of(R"({"mode": "estimate"})").find("mode") != std::string::npos);
    CHECK(message_of(R"({"test_fraction": 1.5})").find("test_fraction") != std::string::npos);
    CHECK(message_of(R"({"models": [{"kind": "qcc", "d": 2}]})").find("models[0].d") !=
          std::string::npos);
    CHECK(message_of(R"({"models": [{"kind": "qec", "n_feature": 3}]})").find("models[0]") !=
          std::string::npos);
    CHECK(message_of(
              R"({"dataset": {"kind": "csv", "path": "x.csv", "pca_components": 2,
                  "features": ["a"]}})")
              .find("mutually exclusive") != std::string::npos);
    CHECK(message_of(R"({"models": [{"kind": "forest", "search": true},
                                    {"kind": "forest", "search": true}]})")
              .find("duplicate search entry") != std::string::npos);
    CHECK(message_of(R"({"models": [{"kind": "qcc", "search": true}]})")
              .find("search") != std::string::npos);
    CHECK_THROWS_AS(load_config("/nonexistent/qens.json"), ConfigError);
}

TEST_CASE("config ids name the hyper-parameters") {
    ModelSpec qec;
    qec.kind = ModelKind::qec;
    qec.cosine.d = 1;
    qec.cosine.n_train = 2;
    CHECK(qec.config_id() == "qec_d1_nt2_ns1_nf2");

    ModelSpec bagging;
    bagging.kind = ModelKind::bagging;
    bagging.ens.learner.learning_rate = 0.1;
    bagging.ens.learner.batch_size = 4;
    bagging.ens.num_learners = 3;
    bagging.ens.learner.epochs = 100;
    CHECK(bagging.config_id() == "bagging_lr0.1_b4_l3_e100");
    bagging.weighting = ensemble::BaggingWeighting::train_accuracy;
    CHECK(bagging.config_id() == "bagging_lr0.1_b4_l3_e100_acc");

    ModelSpec forest;
    forest.kind = ModelKind::forest;
    CHECK(forest.config_id() == "forest_ne100_md5_mss2_msl1_sqrt");
}

TEST_CASE("prepare_datasets fits the scaler per scope") {
    ExperimentConfig c;
    c.seed = 5;
    c.splits = 3;
    c.dataset.kind = DatasetKind::blobs;
    c.dataset.blob.n_samples = 20;

    SUBCASE("train scope rescales each split by its training rows") {
        c.scale_scope = ScaleScope::train;
        const std::vector<PreparedData> prepared = prepare_datasets(c);
        REQUIRE(prepared.size() == 1);
        const PreparedData& pd = prepared[0];
        REQUIRE(pd.splits.size() == 3);
        REQUIRE(pd.per_split.size() == 3);
        for (const data::SplitSpec& split : pd.splits) {
            const data::Dataset& d = pd.per_split[split.split_id];
            for (int col = 0; col < d.num_cols(); ++col) {
                double lo = 1e300, hi = -1e300;
                for (const int r : split.train_indices) {
                    lo = std::min(lo, d.at(r, col));
                    hi = std::max(hi, d.at(r, col));
                }
                CHECK(lo == 0.0);
                CHECK(hi == 1.0);
            }
        }
    }
    SUBCASE("global scope reuses the generation-time scaling") {
        c.scale_scope = ScaleScope::global;
        const std::vector<PreparedData> prepared = prepare_datasets(c);
        const PreparedData& pd = prepared[0];
        for (const data::Dataset& d : pd.per_split)
            for (int r = 0; r < d.num_rows(); ++r)
                for (int col = 0; col < d.num_cols(); ++col)
                    CHECK(d.at(r, col) == pd.base.at(r, col));
    }
    SUBCASE("blob_grid prepares all 18 configurations") {
        c.dataset.kind = DatasetKind::blob_grid;
        c.splits = 2;
        const std::vector<PreparedData> prepared = prepare_datasets(c);
        CHECK(prepared.size() == 18);
        std::set<std::string> ids;
        for (const PreparedData& pd : prepared) {
            ids.insert(pd.id);
            CHECK(pd.splits.size() == 2);
        }
        CHECK(ids.size() == 18);
    }
}

TEST_CASE("prepare_datasets selects csv columns and fits pca on training rows") {
    const fs::path dir = fresh_dir("qens_cli_csv");
    std::ostringstream csv;
    csv << "a,b,c,label\n";
    for (int i = 0; i < 12; ++i) {
        const double t = 0.1 * i;
        csv << format_double(t) << ',' << format_double(1.0 - t) << ','
            << format_double(t * t) << ',' << (i % 2) << '\n';
    }
    write_file(dir / "toy.csv", csv.str());

    ExperimentConfig c;
    c.seed = 3;
    c.splits = 2;
    c.scale_scope = ScaleScope::global;
    c.dataset.kind = DatasetKind::csv;
    c.dataset.path = (dir / "toy.csv").string();

    SUBCASE("feature selection keeps the named columns") {
        c.dataset.feature_names = {"a", "c"};
        const std::vector<PreparedData> prepared = prepare_datasets(c);
        REQUIRE(prepared.size() == 1);
        CHECK(prepared[0].id == "toy_sel2");
        CHECK(prepared[0].per_split[0].num_cols() == 2);
        CHECK(prepared[0].per_split[0].feature_names == std::vector<std::string>{"a", "c"});

        c.dataset.feature_names = {"a", "nope"};
        CHECK_THROWS_AS(prepare_datasets(c), ConfigError);
    }
    SUBCASE("pca projects to the requested width using a train-only fit") {
        c.dataset.pca_components = 1;
        const std::vector<PreparedData> prepared = prepare_datasets(c);
        const PreparedData& pd = prepared[0];
        CHECK(pd.id == "toy_pca1");
        REQUIRE(pd.per_split.size() == 2);
        CHECK(pd.per_split[0].num_cols() == 1);

        // Recompute split 0's projection from scratch: global min-max scale,
        // then a PCA fit on the training rows only.
        data::Dataset base = data::load_csv(c.dataset.path);
        base = data::minmax_apply(data::minmax_fit(data::DatasetView::all(base)), base);
        const data::DatasetView train{&base, pd.splits[0].train_indices};
        const data::Dataset expected = data::pca_apply(data::pca_fit(train, 1), base);
        for (int r = 0; r < expected.num_rows(); ++r)
            CHECK(pd.per_split[0].at(r, 0) == doctest::Approx(expected.at(r, 0)).epsilon(1e-12));
    }
}

TEST_CASE("qubit budget rejects over-cap configs naming the cap") {
    const int saved_cap = sim::max_qubits();
    sim::set_max_qubits(26);

    ExperimentConfig c;
    ModelSpec big;
    big.kind = ModelKind::qec;
    big.cosine.d = 2;
    big.cosine.n_train = 8;
    big.cosine.n_swap = 1;
    big.cosine.n_feature = 32;
    c.models.push_back(big);
    try {
        check_qubit_budget(c, 2);
        FAIL("expected a resource error");
    } catch (const ResourceError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("56") != std::string::npos);
        CHECK(msg.find("26") != std::string::npos);
        CHECK(msg.find("QENS_MAX_QUBITS") != std::string::npos);
    }

    c.models.clear();
    ModelSpec narrow;
    narrow.kind = ModelKind::qcc;
    narrow.cosine.n_feature = 2;
    c.models.push_back(narrow);
    CHECK_THROWS_AS(check_qubit_budget(c, 4), ConfigError);  // 4 features need n_feature >= 4

    c.models.clear();
    ModelSpec ens;
    ens.kind = ModelKind::soft_vote;
    c.models.push_back(ens);
    CHECK_NOTHROW(check_qubit_budget(c, 2));
    sim::set_max_qubits(2);
    CHECK_THROWS_AS(check_qubit_budget(c, 16), ResourceError);  // learners need 4 qubits

    sim::set_max_qubits(saved_cap);
}

TEST_CASE("gen-blobs writes 18 datasets and re-runs byte-identically") {
    const fs::path dir = fresh_dir("qens_cli_gen");
    ExperimentConfig c;
    c.seed = 21;
    c.splits = 2;
    c.out_dir = dir.string();
    cmd_gen_blobs(c);

    int dataset_count = 0;
    for (const auto& entry : fs::directory_iterator(dir / "blobs")) {
        REQUIRE(entry.is_directory());
        ++dataset_count;
        CHECK(fs::exists(entry.path() / "data.csv"));
        CHECK(fs::exists(entry.path() / "split_0.csv"));
        CHECK(fs::exists(entry.path() / "split_1.csv"));
        std::istringstream in(read_file(entry.path() / "data.csv"));
        std::string line;
        int lines = 0;
        while (std::getline(in, line)) ++lines;
        CHECK(lines == 101);  // header + 100 samples
    }
    CHECK(dataset_count == 18);

    const std::string data_a = read_file(dir / "blobs" / "blobs_std0.3_p1_0.3_p2_1" / "data.csv");
    const std::string split_a = read_file(dir / "blobs" / "blobs_std0.5_p1_1_p2_1" / "split_1.csv");
    cmd_gen_blobs(c);
    CHECK(read_file(dir / "blobs" / "blobs_std0.3_p1_0.3_p2_1" / "data.csv") == data_a);
    CHECK(read_file(dir / "blobs" / "blobs_std0.5_p1_1_p2_1" / "split_1.csv") == split_a);
}

TEST_CASE("search writes ranked tables and a deterministic manifest") {
    const fs::path dir = fresh_dir("qens_cli_search");
    ExperimentConfig c;
    c.seed = 31;
    c.workers = 2;
    c.splits = 2;
    c.test_fraction = 0.25;
    c.out_dir = dir.string();
    c.dataset.kind = DatasetKind::blobs;
    c.dataset.blob.cluster_std = 0.1;
    c.dataset.blob.p1 = 0.3;
    c.dataset.blob.p2 = 1.0;
    c.dataset.blob.n_samples = 24;

    ModelSpec bagging;
    bagging.kind = ModelKind::bagging;
    bagging.search = true;
    bagging.grid.learning_rates = {0.1};
    bagging.grid.batch_sizes = {4};
    bagging.grid.ensemble_sizes = {1, 2};
    bagging.grid.epochs = 3;
    c.models.push_back(bagging);

    ModelSpec forest;
    forest.kind = ModelKind::forest;
    forest.search = true;
    forest.n_iter = 3;
    c.models.push_back(forest);

    cmd_search(c);

    const fs::path tables = dir / "search" / "tables";
    std::string dataset_id;
    {
        const std::vector<PreparedData> prepared = prepare_datasets(c);
        dataset_id = prepared[0].id;
    }
    for (int split = 0; split < 2; ++split) {
        const auto grid_table =
            data_lines(read_file(tables / (dataset_id + "_bagging_split" +
                                           std::to_string(split) + ".csv")));
        CHECK(grid_table.size() == 3);  // header + one row per grid point
        CHECK(grid_table[0] ==
              "rank,learning_rate,batch_size,num_learners,epochs,median_val_accuracy,"
              "fold_accuracies");
        CHECK(cells_of(grid_table[1])[0] == "1");
        CHECK(cells_of(grid_table[1]).size() == 7);

        const auto forest_table =
            data_lines(read_file(tables / (dataset_id + "_forest_split" +
                                           std::to_string(split) + ".csv")));
        CHECK(forest_table.size() == 4);  // header + n_iter rows
    }

    const std::string manifest = read_file(dir / "search" / "manifest.csv");
    const auto rows = data_lines(manifest);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == "dataset,model,params,score");
    CHECK(cells_of(rows[1])[0] == dataset_id);
    CHECK(cells_of(rows[1])[1] == "bagging");
    CHECK(cells_of(rows[1])[2].find("lr=0.1;batch=4;learners=") == 0);
    CHECK(cells_of(rows[2])[1] == "forest");
    CHECK(cells_of(rows[2])[2].find("ne=") == 0);

    cmd_search(c);
    CHECK(read_file(dir / "search" / "manifest.csv") == manifest);
}

TEST_CASE("train-eval emits rows, aggregates, best configs, and t-tests") {
    const fs::path dir = fresh_dir("qens_cli_traineval");
    const ExperimentConfig c = small_config(dir.string());
    const ResultsTable table = cmd_train_eval(c);

    REQUIRE(table.rows.size() == 9);  // 3 models x 3 splits
    for (const ResultRow& row : table.rows) {
        CHECK(row.config_hash.size() == 16);
        CHECK(row.seed == 11);
        CHECK(row.record.accuracy >= 0.0);
        CHECK(row.record.accuracy <= 1.0);
        CHECK(row.record.brier >= 0.0);
        CHECK(row.record.brier <= 1.0);
    }
    REQUIRE(table.aggregates.size() == 3);
    for (const AggregateRow& agg : table.aggregates) {
        CHECK(agg.n == 3);
        CHECK_FALSE(std::isnan(agg.accuracy_se));
    }
    // The blobs are far apart at std 0.1: the forest should classify well.
    const AggregateRow* forest_agg = nullptr;
    for (const AggregateRow& agg : table.aggregates)
        if (agg.model_id == "forest") forest_agg = &agg;
    REQUIRE(forest_agg != nullptr);
    CHECK(forest_agg->accuracy_mean >= 0.7);

    CHECK(table.best.size() == 6);   // 3 kinds x 2 orderings
    CHECK(table.ttests.size() == 12);  // 2 non-forest kinds x 2 orderings x 3 metrics
    for (const TTestRow& row : table.ttests) {
        CHECK(row.baseline_config == "forest_ne15_md4_mss2_msl1_sqrt");
        CHECK(row.significant == (row.test.p < 0.05));
    }

    const auto results = data_lines(read_file(dir / "results.csv"));
    CHECK(results.size() == 10);  // header + 9 rows
    CHECK(results[0] ==
          "dataset,model,config,split,accuracy,f1_weighted,brier,single_class,config_hash,seed");
    const std::string timestamped = read_file(dir / "results.csv");
    CHECK(timestamped.substr(0, 6) == "# run ");
    CHECK(data_lines(read_file(dir / "aggregates.csv")).size() == 4);
    CHECK(data_lines(read_file(dir / "best_configs.csv")).size() == 7);
    CHECK(data_lines(read_file(dir / "ttests.csv")).size() == 13);
    CHECK(fs::exists(dir / "run_manifest.txt"));

    // The accuracy column of results.csv reproduces the in-memory rows.
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto cells = cells_of(results[i + 1]);
        CHECK(cells[4] == format_double(table.rows[i].record.accuracy));
        CHECK(cells[8] == table.rows[i].config_hash);
    }
}

TEST_CASE("train-eval re-runs identically modulo the timestamp header") {
    const fs::path dir1 = fresh_dir("qens_cli_det1");
    const fs::path dir2 = fresh_dir("qens_cli_det2");
    ExperimentConfig c1 = small_config(dir1.string());
    ExperimentConfig c2 = small_config(dir2.string());
    c2.workers = 1;  // worker count must not change any result byte
    cmd_train_eval(c1);
    cmd_train_eval(c2);
    CHECK(data_lines(read_file(dir1 / "results.csv")) ==
          data_lines(read_file(dir2 / "results.csv")));
    CHECK(read_file(dir1 / "aggregates.csv") == read_file(dir2 / "aggregates.csv"));
    CHECK(read_file(dir1 / "best_configs.csv") == read_file(dir2 / "best_configs.csv"));
    CHECK(read_file(dir1 / "ttests.csv") == read_file(dir2 / "ttests.csv"));

    ExperimentConfig c3 = small_config(dir2.string());
    c3.seed = 12;
    cmd_train_eval(c3);
    CHECK(data_lines(read_file(dir1 / "results.csv")) !=
          data_lines(read_file(dir2 / "results.csv")));
}

TEST_CASE("search manifests feed train-eval") {
    const fs::path dir = fresh_dir("qens_cli_pipeline");
    ExperimentConfig c;
    c.seed = 31;
    c.workers = 2;
    c.splits = 2;
    c.test_fraction = 0.25;
    c.out_dir = dir.string();
    c.dataset.kind = DatasetKind::blobs;
    c.dataset.blob.cluster_std = 0.1;
    c.dataset.blob.p1 = 0.3;
    c.dataset.blob.p2 = 1.0;
    c.dataset.blob.n_samples = 24;
    ModelSpec bagging;
    bagging.kind = ModelKind::bagging;
    bagging.search = true;
    bagging.grid.learning_rates = {0.1};
    bagging.grid.batch_sizes = {4};
    bagging.grid.ensemble_sizes = {1, 2};
    bagging.grid.epochs = 3;
    c.models.push_back(bagging);

    // No manifest yet: train-eval must point at the search step.
    try {
        cmd_train_eval(c);
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("run search first") != std::string::npos);
    }

    cmd_search(c);
    const ResultsTable table = cmd_train_eval(c);
    REQUIRE(table.rows.size() == 2);
    const auto manifest_rows = data_lines(read_file(dir / "search" / "manifest.csv"));
    const std::string params = cells_of(manifest_rows[1])[2];
    // lr=0.1;batch=4;learners=L;epochs=3 resolves to bagging_lr0.1_b4_lL_e3.
    const std::string learners = params.substr(params.find("learners=") + 9, 1);
    CHECK(table.rows[0].record.config_id == "bagging_lr0.1_b4_l" + learners + "_e3");
}

TEST_CASE("report renders summary, stars, and plot data") {
    const fs::path dir = fresh_dir("qens_cli_report");
    const ExperimentConfig c = small_config(dir.string());
    const ResultsTable table = cmd_train_eval(c);
    cmd_report(dir.string());

    const std::string summary = read_file(dir / "summary.txt");
    CHECK(summary.find("dataset ") != std::string::npos);
    CHECK(summary.find("bagging") != std::string::npos);
    CHECK(summary.find("+/-") != std::string::npos);

    // Stars in the summary match the accuracy-ordering significance flags.
    int significant = 0;
    for (const TTestRow& row : table.ttests)
        if (row.ordering == "accuracy" && row.significant) ++significant;
    int stars = 0;
    for (const char ch : summary)
        if (ch == '*') ++stars;
    CHECK(stars == significant + 1);  // the legend line explains the marker

    const auto plot = data_lines(read_file(dir / "plot_data.csv"));
    REQUIRE(plot.size() == 10);  // header + 3 models x 3 metrics
    CHECK(plot[0] == "model,metric,mean,stderr");
    bool found = false;
    for (std::size_t i = 1; i < plot.size(); ++i) {
        const auto cells = cells_of(plot[i]);
        REQUIRE(cells.size() == 4);
        if (cells[0] == "forest" && cells[1] == "accuracy") {
            found = true;
            for (const AggregateRow& agg : table.aggregates)
                if (agg.model_id == "forest") {
                    CHECK(std::stod(cells[2]) == doctest::Approx(agg.accuracy_mean));
                    CHECK(std::stod(cells[3]) == doctest::Approx(agg.accuracy_se));
                }
        }
    }
    CHECK(found);
}

TEST_CASE("report aggregates a synthetic fixture by hand-checked mean and SE") {
    const fs::path dir = fresh_dir("qens_cli_fixture");
    write_file(dir / "results.csv",
               "# run 2000-01-01T00:00:00Z\n"
               "dataset,model,config,split,accuracy,f1_weighted,brier,single_class,config_hash,"
               "seed\n"
               "toy,m1,m1_cfg,0,0.6,0.5,0.2,0,0123456789abcdef,1\n"
               "toy,m1,m1_cfg,1,0.8,0.7,0.1,0,0123456789abcdef,1\n");
    cmd_report(dir.string());
    const auto plot = data_lines(read_file(dir / "plot_data.csv"));
    REQUIRE(plot.size() == 4);
    const auto acc = cells_of(plot[1]);
    CHECK(acc[0] == "m1");
    CHECK(acc[1] == "accuracy");
    CHECK(std::stod(acc[2]) == doctest::Approx(0.7));
    // SE of {0.6, 0.8}: sd = 0.1414..., /sqrt(2) = 0.1.
    CHECK(std::stod(acc[3]) == doctest::Approx(0.1));
    const auto f1 = cells_of(plot[2]);
    CHECK(std::stod(f1[2]) == doctest::Approx(0.6));
    // Without a ttests.csv the only star is the legend's.
    const std::string summary = read_file(dir / "summary.txt");
    CHECK(std::count(summary.begin(), summary.end(), '*') == 1);

    SUBCASE("single-record input leaves the stderr field empty") {
        const fs::path solo = fresh_dir("qens_cli_fixture_solo");
        write_file(solo / "results.csv",
                   "dataset,model,config,split,accuracy,f1_weighted,brier,single_class,"
                   "config_hash,seed\n"
                   "toy,m1,m1_cfg,0,0.6,0.5,0.2,0,0123456789abcdef,1\n");
        cmd_report(solo.string());
        const auto rows = data_lines(read_file(solo / "plot_data.csv"));
        REQUIRE(rows.size() == 4);
        CHECK(rows[1] == "m1,accuracy,0.6,");
        CHECK(rows[3] == "m1,brier,0.2,");
    }

    SUBCASE("empty directory is a data error") {
        const fs::path empty = fresh_dir("qens_cli_fixture_empty");
        CHECK_THROWS_AS(cmd_report(empty.string()), DataError);
    }
}

TEST_CASE("mean and stderr helpers") {
    CHECK(mean_of({0.8, 0.7, 0.9}) == doctest::Approx(0.8));
    CHECK(stderr_of({0.8, 0.7, 0.9}) == doctest::Approx(0.1 / std::sqrt(3.0)));
    CHECK(std::isnan(stderr_of({0.5})));
    CHECK(std::isnan(mean_of({})));
}

TEST_CASE("predict scores a csv against a saved manifest") {
    const fs::path dir = fresh_dir("qens_cli_predict");

    // Train a small committee on a separable toy set and save its manifest.
    data::Dataset toy(8, 2);
    for (int i = 0; i < 8; ++i) {
        const double t = i < 4 ? 0.1 + 0.02 * i : 0.8 + 0.02 * i;
        toy.at(i, 0) = t;
        toy.at(i, 1) = 1.0 - t;
        toy.set_label(i, i < 4 ? 0 : 1);
    }
    ensemble::EnsembleTrainConfig tc;
    tc.num_learners = 2;
    tc.learner.learning_rate = 0.1;
    tc.learner.batch_size = 4;
    tc.learner.epochs = 3;
    tc.learner.seed = 5;
    const ensemble::EnsembleTrainResult trained =
        ensemble::train_bagging(data::DatasetView::all(toy), tc);
    write_file(dir / "model.txt", ensemble::serialize_ensemble(trained.model));
    write_file(dir / "rows.csv", "a,b\n0.1,0.9\n0.9,0.1\n0.5,0.5\n");

    ExperimentConfig c;
    c.out_dir = dir.string();
    c.predict = PredictSpec{(dir / "model.txt").string(), (dir / "rows.csv").string()};
    cmd_predict(c);

    const auto rows = data_lines(read_file(dir / "predictions.csv"));
    REQUIRE(rows.size() == 4);
    CHECK(rows[0] == "row,probability,label");
    const std::vector<std::vector<double>> inputs = {{0.1, 0.9}, {0.9, 0.1}, {0.5, 0.5}};
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto cells = cells_of(rows[i + 1]);
        const double expected = ensemble::ensemble_predict(trained.model, inputs[i]);
        CHECK(cells[1] == format_double(expected));
        CHECK(cells[2] == std::to_string(metrics::threshold_label(expected)));
    }

    SUBCASE("a label column in the input is ignored") {
        write_file(dir / "rows2.csv", "a,label,b\n0.1,1,0.9\n");
        c.predict->input = (dir / "rows2.csv").string();
        cmd_predict(c);
        const auto with_label = data_lines(read_file(dir / "predictions.csv"));
        const std::vector<double> x{0.1, 0.9};
        CHECK(cells_of(with_label[1])[1] ==
              format_double(ensemble::ensemble_predict(trained.model, x)));
    }
    SUBCASE("feature count must match the manifest's register width") {
        write_file(dir / "rows3.csv", "a,b,c\n0.1,0.9,0.3\n");
        c.predict->input = (dir / "rows3.csv").string();
        CHECK_THROWS_AS(cmd_predict(c), ConfigError);
    }
    SUBCASE("malformed numeric cells are data errors") {
        write_file(dir / "rows4.csv", "a,b\n0.1,oops\n");
        c.predict->input = (dir / "rows4.csv").string();
        CHECK_THROWS_AS(cmd_predict(c), DataError);
    }
    SUBCASE("shot mode is deterministic per seed") {
        c.mode = cosine::EvalMode::shots;
        c.shots = 256;
        c.seed = 9;
        cmd_predict(c);
        const std::string first = read_file(dir / "predictions.csv");
        cmd_predict(c);
        CHECK(read_file(dir / "predictions.csv") == first);
    }
    SUBCASE("missing predict section is a config error") {
        ExperimentConfig bare;
        CHECK_THROWS_AS(cmd_predict(bare), ConfigError);
    }
}

TEST_CASE("cli binary maps errors to exit codes") {
    const fs::path dir = fresh_dir("qens_cli_exitcodes");
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("definitely-not-a-subcommand") == 2);
    CHECK(run_cli("train-eval --config /nonexistent/qens.json") == 2);
    CHECK(run_cli("report --out " + (dir / "empty").string()) == 3);

    write_file(dir / "big.json",
               R"({"seed": 1, "splits": 2,
                   "dataset": {"kind": "blobs", "n_samples": 20},
                   "models": [{"kind": "qec", "d": 2, "n_train": 8, "n_swap": 1,
                               "n_feature": 32}]})");
    CHECK(run_cli("train-eval --config " + (dir / "big.json").string() + " --out " +
                  (dir / "big_out").string()) == 4);

    write_file(dir / "ok.json",
               R"({"seed": 1, "splits": 2,
                   "dataset": {"kind": "blobs", "cluster_std": 0.1, "p1": 0.3, "p2": 1.0,
                               "n_samples": 16},
                   "models": [{"kind": "forest", "n_estimators": 10}]})");
    CHECK(run_cli("train-eval --config " + (dir / "ok.json").string() + " --out " +
                  (dir / "ok_out").string() + " --workers 2") == 0);
    CHECK(fs::exists(dir / "ok_out" / "results.csv"));
    CHECK(run_cli("report --out " + (dir / "ok_out").string()) == 0);
    CHECK(fs::exists(dir / "ok_out" / "plot_data.csv"));
}

TEST_SUITE_END();
