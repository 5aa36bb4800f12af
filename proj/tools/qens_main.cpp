#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "qens/common.hpp"
#include "qens/config.hpp"
#include "qens/harness.hpp"

int main(int argc, char** argv) {
    CLI::App app{"qens: quantum ensemble classification benchmark harness"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string mode;
    std::uint64_t seed = 0;
    int workers = 1;
    long shots = 8192;
    app.add_option("--config", config_path, "experiment config (JSON)");
    app.add_option("--seed", seed, "override the config's experiment seed");
    app.add_option("--workers", workers, "override the config's worker thread count");
    app.add_option("--mode", mode, "readout mode: exact or shots")
        ->check(CLI::IsMember({"exact", "shots"}));
    app.add_option("--shots", shots, "shots per readout in shot mode (default 8192)");
    app.add_option("--out", out_dir, "override the config's output directory");

    CLI::App* gen = app.add_subcommand(
        "gen-blobs", "write the 18-configuration blob datasets with their split files");
    CLI::App* search = app.add_subcommand(
        "search", "cross-validated hyper-parameter search per model per split");
    CLI::App* train = app.add_subcommand(
        "train-eval", "train on each split and evaluate on its held-out test rows");
    CLI::App* report = app.add_subcommand(
        "report", "render results.csv into summary.txt and plot_data.csv");
    CLI::App* predict = app.add_subcommand(
        "predict", "score a feature CSV with a saved ensemble manifest");
    for (CLI::App* sub : {gen, search, train, report, predict}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        qens::cli::ExperimentConfig config;
        if (!config_path.empty()) config = qens::cli::load_config(config_path);
        if (app.count("--seed") > 0) config.seed = seed;
        if (app.count("--workers") > 0) {
            if (workers < 1) throw qens::ConfigError("--workers must be >= 1");
            config.workers = workers;
        }
        if (app.count("--mode") > 0)
            config.mode = mode == "exact" ? qens::cosine::EvalMode::exact
                                          : qens::cosine::EvalMode::shots;
        if (app.count("--shots") > 0) {
            if (shots < 1) throw qens::ConfigError("--shots must be >= 1");
            config.shots = shots;
        }
        if (app.count("--out") > 0) config.out_dir = out_dir;

        if (gen->parsed()) {
            qens::cli::cmd_gen_blobs(config);
        } else if (search->parsed()) {
            qens::cli::cmd_search(config);
        } else if (train->parsed()) {
            qens::cli::cmd_train_eval(config);
        } else if (report->parsed()) {
            qens::cli::cmd_report(config.out_dir);
        } else if (predict->parsed()) {
            qens::cli::cmd_predict(config);
        }
        return 0;
    } catch (const qens::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const qens::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const qens::ResourceError& e) {
        std::cerr << "resource error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
