#ifndef DRBL_TRAINING_HPP
#define DRBL_TRAINING_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "drbl/data.hpp"
#include "drbl/metrics.hpp"
#include "drbl/network.hpp"

namespace drbl {

struct TrainConfig {
    double learning_rate = 0.001;
    double l2_lambda = 0.0015;
    double clip_norm = 15.0;
    std::size_t batch_size = 100;
    std::size_t epochs = 25;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 42;
    /// Evaluate every N epochs; the last epoch is always evaluated.
    std::size_t eval_every = 1;

    void validate() const;
};

struct AdamState {
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
    std::uint64_t t = 0;

    static AdamState zeros_like(const ParamStore& params);
};

// --- loss ------------------------------------------------------------------

Matrix one_hot(std::span<const int> labels, std::size_t classes);

/// λ · ½ Σ‖W‖² over weight matrices only.
double l2_penalty(const ParamStore& params, double l2_lambda);
void add_l2_gradient(ParamStore& params, double l2_lambda);

/// Mean over batch and classes of the stable sigmoid cross entropy
/// max(z,0) − z·y + log(1 + e^−|z|), plus the L2 penalty.
double classification_loss(const Matrix& logits, const Matrix& labels, const ParamStore& params, double l2_lambda);
/// d(mean cross entropy)/d logits; the L2 part is added by add_l2_gradient.
Matrix classification_loss_gradient(const Matrix& logits, const Matrix& labels);

// --- optimizer ---------------------------------------------------------------

struct ClipReport {
    double norm_before = 0.0;
    double scale = 1.0;
    bool clipped = false;
};

double global_grad_norm(const ParamStore& params);

/// Scales every gradient by ν/‖g‖ when the joint norm ‖g‖ exceeds ν.
ClipReport clip_gradients(ParamStore& params, double max_norm);

void adam_step(ParamStore& params, AdamState& state, const TrainConfig& cfg);

// --- training loop -------------------------------------------------------------

/// Everything needed to continue training bitwise-identically.
struct TrainState {
    ParamStore params;
    AdamState adam;
    Rng rng;
    std::size_t epochs_done = 0;
};

TrainState initial_state(const NetworkArchitecture& arch, const TrainConfig& cfg);

struct Evaluation {
    ConfusionMatrix confusion;
    double accuracy = 0.0;
    double weighted_f1 = 0.0;
};

/// Infer-mode scoring; touches neither parameters, running statistics nor
/// any random generator.
Evaluation evaluate(const NetworkArchitecture& arch, const ParamStore& params, const WindowedDataset& data,
                    std::size_t batch_size = 256, std::vector<std::string> class_names = {});

struct EpochStats {
    double mean_loss = 0.0;
    std::size_t windows_seen = 0;
    std::size_t batches = 0;
    bool finite = true;
    std::string abort_reason;
};

/// One shuffled pass over `data` (the short final batch included). On a
/// non-finite loss or gradient the update is skipped, state keeps the last
/// good parameters and `finite` is false.
EpochStats train_epoch(const NetworkArchitecture& arch, TrainState& state, const WindowedDataset& data,
                       const TrainConfig& cfg, std::vector<std::size_t>* visit_order = nullptr);

struct EpochReport {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    double train_f1 = 0.0;
    double test_f1 = 0.0;
    double wall_time = 0.0;
};

struct TrainResult {
    std::vector<EpochReport> reports;
    TrainState final_state;
    ParamStore best_params;
    std::optional<EpochReport> best;
    std::optional<Evaluation> final_test;
    bool aborted = false;
    std::string abort_reason;
};

using EpochCallback = std::function<void(const EpochReport&)>;

TrainResult train(const NetworkArchitecture& arch, TrainState state, const WindowedDataset& train_data,
                  const WindowedDataset& test_data, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// --- hyper-parameters and grid search -----------------------------------------------

/// Names accepted by apply_hyperparameter, sorted.
std::vector<std::string> hyperparameter_names();

/// Sets one architecture or training field from its text form. Accepts
/// "architecture = 2x2" as shorthand for blocks x layers.
void apply_hyperparameter(NetworkArchitecture& arch, TrainConfig& cfg, const std::string& key,
                          const std::string& value);

using Grid = std::vector<std::pair<std::string, std::vector<std::string>>>;

struct TrialResult {
    std::size_t index = 0;
    std::vector<std::pair<std::string, std::string>> settings;
    std::string label;
    NetworkArchitecture arch;
    TrainConfig cfg;
    TrainResult result;

    double best_test_f1() const { return result.best ? result.best->test_f1 : 0.0; }
    double best_test_accuracy() const { return result.best ? result.best->test_accuracy : 0.0; }
};

/// All grid points in row-major order of `grid`.
std::vector<std::vector<std::pair<std::string, std::string>>> expand_grid(const Grid& grid);

/// Best test F1 first, then test accuracy, then label.
void rank_trials(std::vector<TrialResult>& trials);

/// Runs every grid point (each with the base seed unless the grid sets
/// `seed`), in parallel over `threads`, and returns the ranked table. The
/// table does not depend on the thread count.
std::vector<TrialResult> grid_search(const NetworkArchitecture& base_arch, const TrainConfig& base_cfg,
                                     const Grid& grid, const WindowedDataset& train_data,
                                     const WindowedDataset& test_data, std::size_t threads = 1,
                                     const std::function<void(const TrialResult&)>& on_trial = {});

} // namespace drbl

#endif // DRBL_TRAINING_HPP
