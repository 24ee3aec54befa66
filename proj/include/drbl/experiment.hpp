#ifndef DRBL_EXPERIMENT_HPP
#define DRBL_EXPERIMENT_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "drbl/checkpoint.hpp"
#include "drbl/training.hpp"

namespace drbl {

enum class DatasetKind { Uci, Generic, Toy };

/// Everything a run needs, read from a line-oriented `key = value` file.
struct ExperimentConfig {
    DatasetKind dataset = DatasetKind::Uci;
    std::string dataset_path;   ///< UCI root directory or generic manifest
    double window_overlap = 0.5;
    std::size_t toy_train_count = 200;
    std::size_t toy_test_count = 100;
    std::uint64_t toy_seed = 7;

    bool normalize = true;
    double target_std = 0.5;

    std::string output_dir = "runs/default";
    std::size_t threads = 1;
    std::size_t ablation_repeats = 1;

    NetworkArchitecture arch;
    TrainConfig train;
};

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical form: every key, fixed order, round-trips through parse.
std::string serialize_config(const ExperimentConfig& cfg);
/// Applies one `key=value` (or `key = value`) override.
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);
void apply_override(ExperimentConfig& cfg, const std::string& assignment);
std::vector<std::string> config_keys();

/// Grid file: `key = v1, v2, ...` per line, `#` comments.
Grid parse_grid_text(const std::string& text);
Grid load_grid(const std::filesystem::path& path);

struct PreparedData {
    WindowedDataset train;
    WindowedDataset test;
    std::vector<std::string> class_names;
    std::optional<NormalizationStats> normalization;
};

/// Loads, gap-fills, normalizes (stats from train only) and windows the
/// configured dataset. Checks channel and class counts against the
/// architecture.
PreparedData prepare_data(const ExperimentConfig& cfg);

std::uint64_t fnv1a64(const std::string& text);

std::string epoch_table_tsv(const std::vector<EpochReport>& reports);
std::string f1_trend_tsv(const std::vector<EpochReport>& reports);

struct RunSummary {
    std::filesystem::path output_dir;
    TrainResult result;
    Evaluation final_test;
    std::string config_text;
};

/// Writes config copy, epoch table, F1 trend, timings, checkpoints,
/// confusion matrices, scores and summary.json into `dir`.
void write_run_artifacts(const std::filesystem::path& dir, const ExperimentConfig& cfg, const RunSummary& run);

/// Train on the configured dataset and write all artifacts. An INCOMPLETE
/// marker stays in the output directory if anything fails.
RunSummary run_training(const ExperimentConfig& cfg, const PreparedData& data, const std::filesystem::path& dir,
                        bool verbose = false);

RunSummary cmd_train(const std::filesystem::path& config_path, const std::vector<std::string>& overrides,
                     bool verbose = false);

struct EvaluateReport {
    Evaluation test;
    ClassScores scores;
};

EvaluateReport cmd_evaluate(const std::filesystem::path& checkpoint_path, const std::filesystem::path& config_path,
                            const std::vector<std::string>& overrides = {});

std::string ranking_tsv(const std::vector<TrialResult>& trials);

std::vector<TrialResult> cmd_gridsearch(const std::filesystem::path& config_path,
                                        const std::filesystem::path& grid_path,
                                        const std::vector<std::string>& overrides = {}, bool verbose = false);

struct AblationRow {
    std::string variant;
    bool residual = true;
    bool bidirectional = true;
    double accuracy = 0.0;        ///< of the median-accuracy run
    double weighted_f1 = 0.0;     ///< of the same run
    std::uint64_t seed = 0;       ///< seed of the reported run
    ConfusionMatrix confusion;    ///< of the reported run
    std::vector<double> run_accuracies;
};

/// Baseline LSTM, Bidir-LSTM, Res-LSTM and Deep-Res-Bidir-LSTM under one
/// budget; each variant trained `ablation_repeats` times (seeds seed,
/// seed+1, ...) and reported by its median-accuracy run.
std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg, const PreparedData& data,
                                      const std::filesystem::path& dir, bool verbose = false);
std::string ablation_tsv(const std::vector<AblationRow>& rows);

std::vector<AblationRow> cmd_ablation(const std::filesystem::path& config_path,
                                      const std::vector<std::string>& overrides = {}, bool verbose = false);

} // namespace drbl

#endif // DRBL_EXPERIMENT_HPP
