#include "drbl/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "drbl/ops.hpp"

namespace drbl {

namespace {

using Index = Eigen::Index;

std::size_t parse_count(const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        if (!value.empty() && value.front() == '-') throw std::invalid_argument("negative");
        v = std::stoull(value, &pos);
    } catch (const std::logic_error&) {
        throw ConfigError("'" + key + "' expects a non-negative integer, got '" + value + "'");
    }
    if (pos != value.size()) throw ConfigError("'" + key + "' expects a non-negative integer, got '" + value + "'");
    return static_cast<std::size_t>(v);
}

double parse_real(const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    double v = 0;
    try {
        v = std::stod(value, &pos);
    } catch (const std::logic_error&) {
        throw ConfigError("'" + key + "' expects a number, got '" + value + "'");
    }
    if (pos != value.size()) throw ConfigError("'" + key + "' expects a number, got '" + value + "'");
    return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    throw ConfigError("'" + key + "' expects true or false, got '" + value + "'");
}

void parse_architecture_shorthand(NetworkArchitecture& arch, const std::string& value) {
    std::string text = value;
    for (const std::string sep : {"\xC3\x97", "X"}) {
        for (auto p = text.find(sep); p != std::string::npos; p = text.find(sep)) text.replace(p, sep.size(), "x");
    }
    const auto x = text.find('x');
    if (x == std::string::npos || x == 0 || x + 1 == text.size()) {
        throw ConfigError("architecture shorthand must look like 2x2 (blocks x layers), got '" + value + "'");
    }
    arch.residual_blocks = parse_count("architecture", text.substr(0, x));
    arch.bidir_layers_per_block = parse_count("architecture", text.substr(x + 1));
}

} // namespace

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(l2_lambda >= 0.0)) throw ConfigError("l2_lambda must be non-negative");
    if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1 must lie in (0, 1)");
    if (!(adam_beta2 > 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2 must lie in (0, 1)");
    if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be positive");
    if (eval_every == 0) throw ConfigError("eval_every must be at least 1");
}

AdamState AdamState::zeros_like(const ParamStore& params) {
    AdamState s;
    for (const auto& [path, value] : params.params()) {
        s.m[path] = Tensor(value.shape());
        s.v[path] = Tensor(value.shape());
    }
    return s;
}

// --- loss ------------------------------------------------------------------------

Matrix one_hot(std::span<const int> labels, std::size_t classes) {
    Matrix y = Matrix::Zero(static_cast<Index>(labels.size()), static_cast<Index>(classes));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
            throw LabelError("training", "label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                                             " outside [0, " + std::to_string(classes) + ")");
        }
        y(static_cast<Index>(i), labels[i]) = 1.0;
    }
    return y;
}

double l2_penalty(const ParamStore& params, double l2_lambda) {
    if (l2_lambda == 0.0) return 0.0;
    double sum = 0.0;
    for (const auto& [path, value] : params.params()) {
        if (is_weight_matrix(path)) sum += value.data().squaredNorm();
    }
    return l2_lambda * 0.5 * sum;
}

void add_l2_gradient(ParamStore& params, double l2_lambda) {
    if (l2_lambda == 0.0) return;
    for (const auto& [path, value] : params.params()) {
        if (is_weight_matrix(path)) params.grad(path).data() += l2_lambda * value.data();
    }
}

double classification_loss(const Matrix& logits, const Matrix& labels, const ParamStore& params, double l2_lambda) {
    if (logits.rows() != labels.rows() || logits.cols() != labels.cols()) {
        throw DimensionError("training", "logits and labels differ in shape");
    }
    for (Index r = 0; r < labels.rows(); ++r) {
        double sum = 0.0;
        for (Index c = 0; c < labels.cols(); ++c) {
            const double y = labels(r, c);
            if (y != 0.0 && y != 1.0) throw LabelError("training", "label row " + std::to_string(r) + " is not one-hot");
            sum += y;
        }
        if (sum != 1.0) throw LabelError("training", "label row " + std::to_string(r) + " is not one-hot");
    }
    const auto z = logits.array();
    const auto ce = z.max(0.0) - z * labels.array() + (-z.abs()).exp().log1p();
    return ce.mean() + l2_penalty(params, l2_lambda);
}

Matrix classification_loss_gradient(const Matrix& logits, const Matrix& labels) {
    const double n = static_cast<double>(logits.size());
    return (sigmoid_eval(logits) - labels) / n;
}

// --- optimizer -----------------------------------------------------------------------

double global_grad_norm(const ParamStore& params) {
    double sq = 0.0;
    for (const auto& [path, g] : params.grads()) sq += g.data().squaredNorm();
    return std::sqrt(sq);
}

ClipReport clip_gradients(ParamStore& params, double max_norm) {
    if (!(max_norm > 0.0)) throw ConfigError("training", "clip norm must be positive");
    for (const auto& [path, g] : params.grads()) {
        if (!g.all_finite()) throw NumericError("training", "non-finite gradient in '" + path + "'");
    }
    ClipReport report;
    report.norm_before = global_grad_norm(params);
    if (report.norm_before > max_norm) {
        report.scale = max_norm / report.norm_before;
        report.clipped = true;
        for (auto& [path, g] : params.grads()) g.data() *= report.scale;
    }
    return report;
}

void adam_step(ParamStore& params, AdamState& state, const TrainConfig& cfg) {
    ++state.t;
    const double t = static_cast<double>(state.t);
    const double correction1 = 1.0 - std::pow(cfg.adam_beta1, t);
    const double correction2 = 1.0 - std::pow(cfg.adam_beta2, t);
    for (const auto& [path, g] : params.grads()) {
        auto& m = state.m.at(path).data();
        auto& v = state.v.at(path).data();
        m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g.data();
        v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g.data().cwiseAbs2();
        const auto m_hat = m.array() / correction1;
        const auto v_hat = v.array() / correction2;
        params.param(path).data().array() -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
    }
}

// --- training loop ---------------------------------------------------------------------

TrainState initial_state(const NetworkArchitecture& arch, const TrainConfig& cfg) {
    TrainState s;
    s.params = init_params(arch, cfg.seed);
    s.adam = AdamState::zeros_like(s.params);
    s.rng = Rng(mix_seed(cfg.seed));
    return s;
}

Evaluation evaluate(const NetworkArchitecture& arch, const ParamStore& params, const WindowedDataset& data,
                    std::size_t batch_size, std::vector<std::string> class_names) {
    std::vector<int> predictions;
    predictions.reserve(data.size());
    std::vector<std::size_t> indices;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        const std::size_t end = std::min(data.size(), start + batch_size);
        indices.resize(end - start);
        std::iota(indices.begin(), indices.end(), start);
        const Matrix scores = network_forward(arch, params, data.gather(indices), Mode::Infer, nullptr);
        const auto p = argmax_rows(scores);
        predictions.insert(predictions.end(), p.begin(), p.end());
    }
    Evaluation e;
    e.confusion = confusion(predictions, data.labels, arch.num_classes, std::move(class_names));
    if (e.confusion.total() > 0) {
        e.accuracy = accuracy(e.confusion);
        e.weighted_f1 = weighted_f1(e.confusion);
    }
    return e;
}

EpochStats train_epoch(const NetworkArchitecture& arch, TrainState& state, const WindowedDataset& data,
                       const TrainConfig& cfg, std::vector<std::size_t>* visit_order) {
    EpochStats stats;
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[state.rng.below(i)]);

    double loss_sum = 0.0;
    NetworkCache cache;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        const std::span<const std::size_t> batch(order.data() + start, end - start);
        if (visit_order) visit_order->insert(visit_order->end(), batch.begin(), batch.end());
        const Matrix labels = one_hot(data.gather_labels(batch), arch.num_classes);
        const Matrix scores = network_forward(arch, state.params, data.gather(batch), Mode::Train, &state.rng, &cache);
        const double loss = classification_loss(scores, labels, state.params, cfg.l2_lambda);
        if (!std::isfinite(loss)) {
            stats.finite = false;
            stats.abort_reason = "non-finite loss at epoch " + std::to_string(state.epochs_done + 1) + ", batch " +
                                 std::to_string(stats.batches + 1);
            break;
        }
        state.params.zero_grads();
        network_backward(arch, state.params, cache, classification_loss_gradient(scores, labels));
        add_l2_gradient(state.params, cfg.l2_lambda);
        try {
            clip_gradients(state.params, cfg.clip_norm);
        } catch (const NumericError& e) {
            stats.finite = false;
            stats.abort_reason = e.what();
            break;
        }
        adam_step(state.params, state.adam, cfg);
        apply_running_stats(arch, state.params, cache);
        loss_sum += loss * static_cast<double>(batch.size());
        stats.windows_seen += batch.size();
        ++stats.batches;
    }
    stats.mean_loss = stats.windows_seen ? loss_sum / static_cast<double>(stats.windows_seen) : 0.0;
    if (stats.finite) ++state.epochs_done;
    return stats;
}

TrainResult train(const NetworkArchitecture& arch, TrainState state, const WindowedDataset& train_data,
                  const WindowedDataset& test_data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
    arch.validate();
    cfg.validate();
    if (train_data.size() == 0 || test_data.size() == 0) {
        throw ConfigError("training", "train and test sets must both be non-empty");
    }
    TrainResult result;
    while (state.epochs_done < cfg.epochs) {
        const auto started = std::chrono::steady_clock::now();
        const EpochStats stats = train_epoch(arch, state, train_data, cfg);
        if (!stats.finite) {
            result.aborted = true;
            result.abort_reason = stats.abort_reason;
            break;
        }
        const std::size_t epoch = state.epochs_done;
        if (epoch % cfg.eval_every != 0 && epoch != cfg.epochs) continue;
        const Evaluation train_eval = evaluate(arch, state.params, train_data);
        Evaluation test_eval = evaluate(arch, state.params, test_data);
        EpochReport report;
        report.epoch = epoch;
        report.train_loss = stats.mean_loss;
        report.train_accuracy = train_eval.accuracy;
        report.train_f1 = train_eval.weighted_f1;
        report.test_accuracy = test_eval.accuracy;
        report.test_f1 = test_eval.weighted_f1;
        report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        if (!result.best || report.test_f1 > result.best->test_f1) {
            result.best = report;
            result.best_params = state.params;
        }
        result.final_test = std::move(test_eval);
        result.reports.push_back(report);
        if (on_epoch) on_epoch(report);
    }
    result.final_state = std::move(state);
    return result;
}

// --- hyper-parameters -----------------------------------------------------------------

std::vector<std::string> hyperparameter_names() {
    std::vector<std::string> names = {
        "adam_beta1",       "adam_beta2",   "adam_epsilon",     "architecture",      "batch_norm",
        "batch_size",       "bidir_layers_per_block",           "bidirectional",     "block.<k>.residual",
        "bn_beta_init",     "bn_epsilon",   "bn_momentum",      "clip_norm",         "dropout_keep_prob",
        "dropout_placement", "epochs",      "eval_every",       "hidden_width",      "input_channels",
        "l2_lambda",        "learning_rate", "num_classes",     "residual",          "residual_blocks",
        "seed",             "window_length"};
    std::sort(names.begin(), names.end());
    return names;
}

void apply_hyperparameter(NetworkArchitecture& arch, TrainConfig& cfg, const std::string& key,
                          const std::string& value) {
    if (key == "residual_blocks") arch.residual_blocks = parse_count(key, value);
    else if (key == "bidir_layers_per_block") arch.bidir_layers_per_block = parse_count(key, value);
    else if (key == "architecture") parse_architecture_shorthand(arch, value);
    else if (key == "hidden_width") arch.hidden_width = parse_count(key, value);
    else if (key == "input_channels") arch.input_channels = parse_count(key, value);
    else if (key == "num_classes") arch.num_classes = parse_count(key, value);
    else if (key == "window_length") arch.window_length = parse_count(key, value);
    else if (key == "dropout_keep_prob") arch.dropout_keep_prob = parse_real(key, value);
    else if (key == "dropout_placement") arch.dropout_placement = parse_dropout_placement(value);
    else if (key == "residual") arch.residual = parse_bool(key, value);
    else if (key == "bidirectional") arch.bidirectional = parse_bool(key, value);
    else if (key == "batch_norm") arch.batch_norm = parse_bool(key, value);
    else if (key == "bn_beta_init") arch.bn_beta_init = parse_real(key, value);
    else if (key == "bn_momentum") arch.bn_momentum = parse_real(key, value);
    else if (key == "bn_epsilon") arch.bn_epsilon = parse_real(key, value);
    else if (key == "learning_rate") cfg.learning_rate = parse_real(key, value);
    else if (key == "l2_lambda") cfg.l2_lambda = parse_real(key, value);
    else if (key == "clip_norm") cfg.clip_norm = parse_real(key, value);
    else if (key == "batch_size") cfg.batch_size = parse_count(key, value);
    else if (key == "epochs") cfg.epochs = parse_count(key, value);
    else if (key == "adam_beta1") cfg.adam_beta1 = parse_real(key, value);
    else if (key == "adam_beta2") cfg.adam_beta2 = parse_real(key, value);
    else if (key == "adam_epsilon") cfg.adam_epsilon = parse_real(key, value);
    else if (key == "seed") cfg.seed = parse_count(key, value);
    else if (key == "eval_every") cfg.eval_every = parse_count(key, value);
    else if (key.rfind("block.", 0) == 0 && key.size() > 15 && key.substr(key.size() - 9) == ".residual") {
        const std::size_t block = parse_count(key, key.substr(6, key.size() - 15));
        if (block == 0) throw ConfigError("block indices start at 1; '" + key + "' is invalid");
        arch.block_residual[block] = parse_bool(key, value);
    } else {
        std::string valid;
        for (const auto& n : hyperparameter_names()) valid += (valid.empty() ? "" : ", ") + n;
        throw ConfigError("unknown hyper-parameter '" + key + "'; valid names: " + valid);
    }
}

// --- grid search -------------------------------------------------------------------------

std::vector<std::vector<std::pair<std::string, std::string>>> expand_grid(const Grid& grid) {
    std::vector<std::vector<std::pair<std::string, std::string>>> points{{}};
    for (const auto& [key, values] : grid) {
        if (values.empty()) throw ConfigError("grid key '" + key + "' has no values");
        std::vector<std::vector<std::pair<std::string, std::string>>> next;
        for (const auto& point : points) {
            for (const auto& v : values) {
                auto p = point;
                p.emplace_back(key, v);
                next.push_back(std::move(p));
            }
        }
        points = std::move(next);
    }
    return points;
}

void rank_trials(std::vector<TrialResult>& trials) {
    std::stable_sort(trials.begin(), trials.end(), [](const TrialResult& a, const TrialResult& b) {
        if (a.best_test_f1() != b.best_test_f1()) return a.best_test_f1() > b.best_test_f1();
        if (a.best_test_accuracy() != b.best_test_accuracy()) return a.best_test_accuracy() > b.best_test_accuracy();
        return a.label < b.label;
    });
}

std::vector<TrialResult> grid_search(const NetworkArchitecture& base_arch, const TrainConfig& base_cfg,
                                     const Grid& grid, const WindowedDataset& train_data,
                                     const WindowedDataset& test_data, std::size_t threads,
                                     const std::function<void(const TrialResult&)>& on_trial) {
    if (grid.empty()) throw ConfigError("grid must name at least one hyper-parameter");
    const auto points = expand_grid(grid);
    std::vector<TrialResult> trials(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        TrialResult& t = trials[i];
        t.index = i;
        t.settings = points[i];
        t.arch = base_arch;
        t.cfg = base_cfg;
        for (const auto& [k, v] : t.settings) {
            apply_hyperparameter(t.arch, t.cfg, k, v);
            t.label += (t.label.empty() ? "" : ";") + k + "=" + v;
        }
        t.arch.validate();
        t.cfg.validate();
    }

    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(trials.size());
    std::mutex callback_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < trials.size(); i = next++) {
            try {
                TrialResult& t = trials[i];
                t.result = train(t.arch, initial_state(t.arch, t.cfg), train_data, test_data, t.cfg);
                if (on_trial) {
                    std::lock_guard lock(callback_mutex);
                    on_trial(t);
                }
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t n_threads = std::max<std::size_t>(1, std::min(threads, trials.size()));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t k = 0; k < n_threads; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    rank_trials(trials);
    return trials;
}

} // namespace drbl
