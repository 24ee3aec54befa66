// Command-line front end: train, gridsearch, evaluate, ablation.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "drbl/experiment.hpp"

namespace {

struct Globals {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;
    std::optional<std::size_t> threads;
    bool quiet = false;
};

/// Global options become trailing overrides so they win over the config file.
std::vector<std::string> with_globals(std::vector<std::string> sets, const Globals& g) {
    if (g.seed) sets.push_back("seed=" + std::to_string(*g.seed));
    if (g.output_dir) sets.push_back("output_dir=" + *g.output_dir);
    if (g.threads) sets.push_back("threads=" + std::to_string(*g.threads));
    return sets;
}

void print_scores(const drbl::Evaluation& e) {
    const auto scores = drbl::class_scores(e.confusion);
    std::cout << drbl::confusion_to_tsv(e.confusion) << '\n' << drbl::scores_to_tsv(scores);
    std::printf("accuracy %.4f  weighted f1 %.4f\n", e.accuracy, e.weighted_f1);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deep residual bidirectional LSTM trainer for windowed sensor streams"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    std::uint64_t seed = 0;
    std::string output_dir;
    std::size_t threads = 0;
    auto* seed_opt = app.add_option("--seed", seed, "Random seed for initialization and shuffling");
    auto* out_opt = app.add_option("--output-dir", output_dir, "Directory for run artifacts");
    auto* threads_opt = app.add_option("--threads", threads, "Worker threads (grid search trials run in parallel)")
                            ->check(CLI::PositiveNumber);
    app.add_flag("-q,--quiet", g.quiet, "Suppress per-epoch progress");

    std::string config, grid, checkpoint;
    std::vector<std::string> sets;

    auto* train = app.add_subcommand("train", "Train one model and write its artifacts");
    train->add_option("config", config, "Config file")->required();
    train->add_option("--set", sets, "Override a config key (key=value); repeatable");

    auto* gridsearch = app.add_subcommand("gridsearch", "Train every grid point and rank by best test F1");
    gridsearch->add_option("config", config, "Base config file")->required();
    gridsearch->add_option("grid", grid, "Grid file (key = v1, v2, ...)")->required();
    gridsearch->add_option("--set", sets, "Override a config key (key=value); repeatable");

    auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on the test split");
    evaluate->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
    evaluate->add_option("config", config, "Config file describing the architecture and data")->required();
    evaluate->add_option("--set", sets, "Override a config key (key=value); repeatable");

    auto* ablation = app.add_subcommand("ablation", "Compare LSTM, Bidir-LSTM, Res-LSTM and Deep-Res-Bidir-LSTM");
    ablation->add_option("config", config, "Config file")->required();
    ablation->add_option("--set", sets, "Override a config key (key=value); repeatable");

    CLI11_PARSE(app, argc, argv);
    if (*seed_opt) g.seed = seed;
    if (*out_opt) g.output_dir = output_dir;
    if (*threads_opt) {
        g.threads = threads;
        Eigen::setNbThreads(static_cast<int>(threads));
    }
    const auto overrides = with_globals(sets, g);
    const bool verbose = !g.quiet;

    try {
        if (*train) {
            const auto run = drbl::cmd_train(config, overrides, verbose);
            print_scores(run.final_test);
            std::cout << "artifacts in " << run.output_dir.string() << '\n';
        } else if (*gridsearch) {
            const auto trials = drbl::cmd_gridsearch(config, grid, overrides, verbose);
            std::cout << drbl::ranking_tsv(trials);
        } else if (*evaluate) {
            const auto report = drbl::cmd_evaluate(checkpoint, config, overrides);
            print_scores(report.test);
        } else if (*ablation) {
            const auto rows = drbl::cmd_ablation(config, overrides, verbose);
            std::cout << drbl::ablation_tsv(rows);
        }
    } catch (const drbl::Error& e) {
        std::cerr << "error [" << e.module() << "]: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
