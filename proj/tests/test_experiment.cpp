#include <fstream>

#include <gtest/gtest.h>

#include "drbl/experiment.hpp"
#include "drbl/io.hpp"
#include "test_util.hpp"

using namespace drbl;
using namespace drbl::testing;
namespace fs = std::filesystem;

namespace {

const char* kToyConfig = R"(# small toy run
dataset = toy
toy_train_count = 64
toy_test_count = 32
architecture = 1x1
hidden_width = 5
input_channels = 3
window_length = 6
num_classes = 2
epochs = 3
batch_size = 16
learning_rate = 0.01
seed = 9
)";

fs::path write_config(const fs::path& dir, const std::string& text, const std::string& name = "run.cfg") {
    write_file_atomic(dir / name, text);
    return dir / name;
}

std::string out(const fs::path& dir, const std::string& sub) { return "output_dir=" + (dir / sub).string(); }

} // namespace

// --- configuration ------------------------------------------------------------------------

TEST(Config, ParsesCommentsAndValues) {
    const auto cfg = parse_config_text(kToyConfig);
    EXPECT_EQ(cfg.dataset, DatasetKind::Toy);
    EXPECT_EQ(cfg.arch.hidden_width, 5u);
    EXPECT_EQ(cfg.train.epochs, 3u);
    EXPECT_EQ(cfg.train.learning_rate, 0.01);
    EXPECT_EQ(cfg.toy_train_count, 64u);
}

TEST(Config, CanonicalFormRoundTrips) {
    auto cfg = parse_config_text(std::string(kToyConfig) + "architecture = 3x1\nblock.2.residual = false\n"
                                                           "learning_rate = 0.1\n");
    const std::string text = serialize_config(cfg);
    const auto back = parse_config_text(text);
    EXPECT_EQ(serialize_config(back), text);
    EXPECT_FALSE(back.arch.residual_for_block(2));
    EXPECT_EQ(back.train.learning_rate, 0.1);
}

TEST(Config, Overrides) {
    auto cfg = parse_config_text(kToyConfig);
    apply_override(cfg, "hidden_width=7");
    apply_override(cfg, "learning_rate = 0.5");
    EXPECT_EQ(cfg.arch.hidden_width, 7u);
    EXPECT_EQ(cfg.train.learning_rate, 0.5);
    EXPECT_THROW(apply_override(cfg, "hidden_width"), ConfigError);
}

TEST(Config, UnknownKeyListsValidKeys) {
    try {
        parse_config_text("hiden_width = 3\n", "x.cfg");
        FAIL() << "expected a config error";
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("hiden_width"), std::string::npos);
        EXPECT_NE(what.find("hidden_width"), std::string::npos);
        EXPECT_NE(what.find("x.cfg:1"), std::string::npos);
    }
}

TEST(Config, InvalidValuesRejected) {
    EXPECT_THROW(parse_config_text("block.0.residual = false\n"), ConfigError);
    EXPECT_THROW(parse_config_text("learning_rate = -1\n"), ConfigError);
    EXPECT_THROW(parse_config_text("dropout_keep_prob = 0\n"), ConfigError);
    EXPECT_THROW(parse_config_text("batch_size = 0\n"), ConfigError);
    EXPECT_THROW(parse_config_text("dataset = imagenet\n"), ConfigError);
    EXPECT_THROW(parse_config_text("just some words\n"), ConfigError);
    EXPECT_THROW(load_config("/nonexistent/run.cfg"), ConfigError);
}

TEST(Config, GridFiles) {
    const Grid g = parse_grid_text("# two axes\nlearning_rate = 0.01, 0.001\nhidden_width = 4,8 , 16\n");
    ASSERT_EQ(g.size(), 2u);
    EXPECT_EQ(g[1].second, (std::vector<std::string>{"4", "8", "16"}));
    EXPECT_EQ(expand_grid(g).size(), 6u);
    EXPECT_THROW(parse_grid_text("# nothing\n"), ConfigError);
}

TEST(Config, DataMustMatchArchitecture) {
    auto cfg = parse_config_text(kToyConfig);
    cfg.arch.num_classes = 3;
    EXPECT_THROW(prepare_data(cfg), ConfigError);
    cfg = parse_config_text(kToyConfig);
    cfg.dataset = DatasetKind::Uci;
    cfg.dataset_path = "/nonexistent/uci";
    EXPECT_THROW(prepare_data(cfg), DataError);
}

// --- train --------------------------------------------------------------------------------

TEST(Train, WritesArtifacts) {
    const auto dir = scratch_dir("exp_artifacts");
    const auto cfg = write_config(dir, kToyConfig);
    const auto run = cmd_train(cfg, {out(dir, "run")});
    for (const char* f : {"config.cfg", "epochs.tsv", "f1_trend.tsv", "timing.tsv", "checkpoint_final.ckpt",
                          "checkpoint_best.ckpt", "confusion.tsv", "confusion_percent.tsv", "scores.tsv",
                          "summary.json"}) {
        EXPECT_TRUE(fs::exists(dir / "run" / f)) << f;
    }
    EXPECT_FALSE(fs::exists(dir / "run" / "INCOMPLETE"));
    const std::string table = read_file(dir / "run" / "epochs.tsv");
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 4);
    EXPECT_EQ(table.rfind("epoch\ttrain_loss", 0), 0u);
    const auto summary = nlohmann::json::parse(read_file(dir / "run" / "summary.json"));
    EXPECT_EQ(summary.at("epochs_completed").get<int>(), 3);
    EXPECT_EQ(summary.at("lstm_cells").get<int>(), 2);
    EXPECT_EQ(confusion_from_json(summary.at("final").at("confusion")).counts, run.final_test.confusion.counts);
    // The copied configuration reproduces the run.
    EXPECT_EQ(serialize_config(load_config(dir / "run" / "config.cfg")), run.config_text);
}

TEST(Train, ZeroEpochsSucceedsWithEmptyTable) {
    const auto dir = scratch_dir("exp_zero");
    const auto cfg = write_config(dir, kToyConfig);
    const auto run = cmd_train(cfg, {out(dir, "run"), "epochs=0"});
    EXPECT_TRUE(run.result.reports.empty());
    EXPECT_EQ(read_file(dir / "run" / "epochs.tsv"),
              "epoch\ttrain_loss\ttrain_accuracy\ttrain_f1\ttest_accuracy\ttest_f1\n");
    EXPECT_FALSE(fs::exists(dir / "run" / "INCOMPLETE"));
    EXPECT_FALSE(fs::exists(dir / "run" / "checkpoint_best.ckpt"));
}

TEST(Train, RepeatedRunsAreByteIdentical) {
    const auto dir = scratch_dir("exp_repeat");
    const auto cfg = write_config(dir, kToyConfig);
    cmd_train(cfg, {out(dir, "a")});
    cmd_train(cfg, {out(dir, "b")});
    for (const char* f : {"epochs.tsv", "checkpoint_final.ckpt", "checkpoint_best.ckpt", "confusion.tsv"})
        EXPECT_EQ(read_file(dir / "a" / f), read_file(dir / "b" / f)) << f;
}

TEST(Train, SeedFlagChangesRun) {
    const auto dir = scratch_dir("exp_seed");
    const auto cfg = write_config(dir, kToyConfig);
    cmd_train(cfg, {out(dir, "a")});
    cmd_train(cfg, {out(dir, "b"), "seed=10"});
    EXPECT_NE(read_file(dir / "a" / "checkpoint_final.ckpt"), read_file(dir / "b" / "checkpoint_final.ckpt"));
}

TEST(Train, MissingDatasetFails) {
    const auto dir = scratch_dir("exp_fail");
    const auto cfg = write_config(dir, std::string(kToyConfig) + "dataset = uci\ndataset_path = /nonexistent\n");
    EXPECT_THROW(cmd_train(cfg, {out(dir, "run")}), DataError);
}

// --- evaluate ---------------------------------------------------------------------------------

TEST(Evaluate, MatchesFinalMetricsOfTraining) {
    const auto dir = scratch_dir("exp_evaluate");
    const auto cfg = write_config(dir, kToyConfig);
    const auto run = cmd_train(cfg, {out(dir, "run")});
    const auto e1 = cmd_evaluate(dir / "run" / "checkpoint_final.ckpt", cfg);
    const auto e2 = cmd_evaluate(dir / "run" / "checkpoint_final.ckpt", cfg);
    EXPECT_EQ(e1.test.confusion.counts, run.final_test.confusion.counts);
    EXPECT_EQ(e1.test.accuracy, run.final_test.accuracy);
    EXPECT_EQ(e1.test.weighted_f1, run.final_test.weighted_f1);
    EXPECT_EQ(e1.test.weighted_f1, e2.test.weighted_f1);
    EXPECT_EQ(scores_to_tsv(e1.scores), read_file(dir / "run" / "scores.tsv"));
}

TEST(Evaluate, ShapeMismatchNamesBothShapes) {
    const auto dir = scratch_dir("exp_mismatch");
    const auto cfg = write_config(dir, kToyConfig);
    cmd_train(cfg, {out(dir, "run"), "hidden_width=28", "epochs=1"});
    try {
        cmd_evaluate(dir / "run" / "checkpoint_final.ckpt", cfg, {"hidden_width=64"});
        FAIL() << "expected a dimension error";
    } catch (const DimensionError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("28"), std::string::npos) << what;
        EXPECT_NE(what.find("64"), std::string::npos) << what;
    }
}

// --- grid search ------------------------------------------------------------------------------------

TEST(GridSearch, SinglePointMatchesTrain) {
    const auto dir = scratch_dir("exp_grid1");
    const auto cfg = write_config(dir, kToyConfig);
    write_config(dir, "learning_rate = 0.01\n", "grid.cfg");
    const auto trials = cmd_gridsearch(cfg, dir / "grid.cfg", {out(dir, "grid")});
    cmd_train(cfg, {out(dir, "direct")});
    ASSERT_EQ(trials.size(), 1u);
    EXPECT_EQ(read_file(dir / "grid" / "trial_000" / "checkpoint_final.ckpt"),
              read_file(dir / "direct" / "checkpoint_final.ckpt"));
    EXPECT_EQ(read_file(dir / "grid" / "trial_000" / "epochs.tsv"), read_file(dir / "direct" / "epochs.tsv"));
}

TEST(GridSearch, TwoByTwoRanked) {
    const auto dir = scratch_dir("exp_grid4");
    const auto cfg = write_config(dir, kToyConfig);
    write_config(dir, "learning_rate = 0.0001, 0.01\nhidden_width = 3, 5\n", "grid.cfg");
    const auto trials = cmd_gridsearch(cfg, dir / "grid.cfg", {out(dir, "grid"), "threads=2"});
    ASSERT_EQ(trials.size(), 4u);
    for (int i = 0; i < 4; ++i) {
        char name[16];
        std::snprintf(name, sizeof name, "trial_%03d", i);
        EXPECT_TRUE(fs::exists(dir / "grid" / name / "summary.json")) << name;
    }
    for (std::size_t i = 1; i < trials.size(); ++i) EXPECT_GE(trials[i - 1].best_test_f1(), trials[i].best_test_f1());
    const std::string ranking = read_file(dir / "grid" / "ranking.tsv");
    EXPECT_EQ(std::count(ranking.begin(), ranking.end(), '\n'), 5);
    EXPECT_EQ(ranking, ranking_tsv(trials));
}

TEST(GridSearch, BadGridRejectedUpFront) {
    const auto dir = scratch_dir("exp_grid_bad");
    const auto cfg = write_config(dir, kToyConfig);
    write_config(dir, "learning_rate = 0.01, -2\n", "grid.cfg");
    EXPECT_THROW(cmd_gridsearch(cfg, dir / "grid.cfg", {out(dir, "grid")}), ConfigError);
    EXPECT_FALSE(fs::exists(dir / "grid" / "trial_000"));
}

// --- ablation ---------------------------------------------------------------------------------------

TEST(Ablation, FourVariantsWithConsistentMetrics) {
    const auto dir = scratch_dir("exp_ablation");
    const auto cfg = write_config(dir, kToyConfig);
    const auto rows = cmd_ablation(cfg, {out(dir, "abl"), "epochs=2", "ablation_repeats=3"});
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0].variant, "LSTM");
    EXPECT_FALSE(rows[0].residual);
    EXPECT_FALSE(rows[0].bidirectional);
    EXPECT_EQ(rows[3].variant, "Deep-Res-Bidir-LSTM");
    for (const auto& r : rows) {
        EXPECT_EQ(r.accuracy, static_cast<double>(r.confusion.correct()) / static_cast<double>(r.confusion.total()));
        ASSERT_EQ(r.run_accuracies.size(), 3u);
        auto sorted = r.run_accuracies;
        std::sort(sorted.begin(), sorted.end());
        EXPECT_EQ(r.accuracy, sorted[1]);
        const auto summary = nlohmann::json::parse(read_file(dir / "abl" / r.variant / "summary.json"));
        EXPECT_EQ(confusion_from_json(summary.at("final").at("confusion")).counts, r.confusion.counts);
    }
    EXPECT_EQ(read_file(dir / "abl" / "ablation.tsv"), ablation_tsv(rows));
}
