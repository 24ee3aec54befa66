#include "drbl/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "drbl/io.hpp"

namespace drbl {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fixed(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10f", v);
    return buf;
}

const char* boolean(bool b) { return b ? "true" : "false"; }

std::string dataset_name(DatasetKind k) {
    switch (k) {
    case DatasetKind::Uci: return "uci";
    case DatasetKind::Generic: return "generic";
    case DatasetKind::Toy: return "toy";
    }
    return "uci";
}

std::size_t parse_count(const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        if (!value.empty() && value[0] != '-') v = std::stoull(value, &pos);
    } catch (const std::logic_error&) {
        pos = 0;
    }
    if (value.empty() || pos != value.size()) {
        throw ConfigError("'" + key + "' expects a non-negative integer, got '" + value + "'");
    }
    return static_cast<std::size_t>(v);
}

bool parse_flag(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    throw ConfigError("'" + key + "' expects true or false, got '" + value + "'");
}

double parse_number(const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    double v = 0;
    try {
        v = std::stod(value, &pos);
    } catch (const std::logic_error&) {
        pos = std::string::npos;
    }
    if (pos != value.size()) throw ConfigError("'" + key + "' expects a number, got '" + value + "'");
    return v;
}

struct Assignment {
    std::string key;
    std::string value;
    std::size_t line = 0;
};

/// Splits `key = value` lines, dropping comments and blanks.
std::vector<Assignment> parse_assignments(const std::string& text, const std::string& origin) {
    std::vector<Assignment> out;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        out.push_back({trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no});
    }
    return out;
}

void mark_incomplete(const fs::path& dir, const std::string& reason) {
    try {
        write_file_atomic(dir / "INCOMPLETE", reason + "\n");
    } catch (...) {
    }
}

void print_epoch(const EpochReport& r) {
    std::printf("epoch %zu  loss %.5f  train acc %.4f f1 %.4f  test acc %.4f f1 %.4f  (%.1fs)\n", r.epoch,
                r.train_loss, r.train_accuracy, r.train_f1, r.test_accuracy, r.test_f1, r.wall_time);
    std::fflush(stdout);
}

nlohmann::json report_json(const EpochReport& r) {
    return {{"epoch", r.epoch},           {"train_loss", r.train_loss}, {"train_accuracy", r.train_accuracy},
            {"train_f1", r.train_f1},     {"test_accuracy", r.test_accuracy}, {"test_f1", r.test_f1}};
}

} // namespace

// --- configuration ---------------------------------------------------------------

std::vector<std::string> config_keys() {
    std::vector<std::string> keys = hyperparameter_names();
    for (const char* k : {"dataset", "dataset_path", "window_overlap", "toy_train_count", "toy_test_count", "toy_seed",
                          "normalize", "target_std", "output_dir", "threads", "ablation_repeats"}) {
        keys.emplace_back(k);
    }
    std::sort(keys.begin(), keys.end());
    return keys;
}

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "dataset") {
        if (value == "uci") cfg.dataset = DatasetKind::Uci;
        else if (value == "generic") cfg.dataset = DatasetKind::Generic;
        else if (value == "toy") cfg.dataset = DatasetKind::Toy;
        else throw ConfigError("dataset must be uci, generic or toy; got '" + value + "'");
    } else if (key == "dataset_path") cfg.dataset_path = value;
    else if (key == "window_overlap") cfg.window_overlap = parse_number(key, value);
    else if (key == "toy_train_count") cfg.toy_train_count = parse_count(key, value);
    else if (key == "toy_test_count") cfg.toy_test_count = parse_count(key, value);
    else if (key == "toy_seed") cfg.toy_seed = parse_count(key, value);
    else if (key == "normalize") cfg.normalize = parse_flag(key, value);
    else if (key == "target_std") cfg.target_std = parse_number(key, value);
    else if (key == "output_dir") cfg.output_dir = value;
    else if (key == "threads") cfg.threads = parse_count(key, value);
    else if (key == "ablation_repeats") cfg.ablation_repeats = parse_count(key, value);
    else {
        try {
            apply_hyperparameter(cfg.arch, cfg.train, key, value);
        } catch (const ConfigError& e) {
            if (std::string(e.what()).rfind("unknown hyper-parameter", 0) != 0) throw;
            std::string valid;
            for (const auto& k : config_keys()) valid += (valid.empty() ? "" : ", ") + k;
            throw ConfigError("unknown configuration key '" + key + "'; valid keys: " + valid);
        }
    }
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' must look like key=value");
    apply_setting(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    ExperimentConfig cfg;
    for (const auto& a : parse_assignments(text, origin)) {
        try {
            apply_setting(cfg, a.key, a.value);
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(a.line) + ": " + e.what());
        }
    }
    cfg.arch.validate();
    cfg.train.validate();
    if (!(cfg.target_std > 0.0)) throw ConfigError(origin + ": target_std must be positive");
    if (cfg.ablation_repeats == 0) throw ConfigError(origin + ": ablation_repeats must be at least 1");
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("config file '" + path.string() + "' not found");
    return parse_config_text(read_file(path), path.string());
}

std::string serialize_config(const ExperimentConfig& cfg) {
    const auto& a = cfg.arch;
    const auto& t = cfg.train;
    std::ostringstream os;
    os << "dataset = " << dataset_name(cfg.dataset) << '\n'
       << "dataset_path = " << cfg.dataset_path << '\n'
       << "window_overlap = " << real(cfg.window_overlap) << '\n'
       << "toy_train_count = " << cfg.toy_train_count << '\n'
       << "toy_test_count = " << cfg.toy_test_count << '\n'
       << "toy_seed = " << cfg.toy_seed << '\n'
       << "normalize = " << boolean(cfg.normalize) << '\n'
       << "target_std = " << real(cfg.target_std) << '\n'
       << "output_dir = " << cfg.output_dir << '\n'
       << "threads = " << cfg.threads << '\n'
       << "ablation_repeats = " << cfg.ablation_repeats << '\n'
       << "residual_blocks = " << a.residual_blocks << '\n'
       << "bidir_layers_per_block = " << a.bidir_layers_per_block << '\n'
       << "hidden_width = " << a.hidden_width << '\n'
       << "input_channels = " << a.input_channels << '\n'
       << "num_classes = " << a.num_classes << '\n'
       << "window_length = " << a.window_length << '\n'
       << "dropout_keep_prob = " << real(a.dropout_keep_prob) << '\n'
       << "dropout_placement = " << to_string(a.dropout_placement) << '\n'
       << "residual = " << boolean(a.residual) << '\n'
       << "bidirectional = " << boolean(a.bidirectional) << '\n'
       << "batch_norm = " << boolean(a.batch_norm) << '\n';
    for (const auto& [block, flag] : a.block_residual) os << "block." << block << ".residual = " << boolean(flag) << '\n';
    os << "bn_beta_init = " << real(a.bn_beta_init) << '\n'
       << "bn_momentum = " << real(a.bn_momentum) << '\n'
       << "bn_epsilon = " << real(a.bn_epsilon) << '\n'
       << "learning_rate = " << real(t.learning_rate) << '\n'
       << "l2_lambda = " << real(t.l2_lambda) << '\n'
       << "clip_norm = " << real(t.clip_norm) << '\n'
       << "batch_size = " << t.batch_size << '\n'
       << "epochs = " << t.epochs << '\n'
       << "adam_beta1 = " << real(t.adam_beta1) << '\n'
       << "adam_beta2 = " << real(t.adam_beta2) << '\n'
       << "adam_epsilon = " << real(t.adam_epsilon) << '\n'
       << "seed = " << t.seed << '\n'
       << "eval_every = " << t.eval_every << '\n';
    return os.str();
}

Grid parse_grid_text(const std::string& text) {
    Grid grid;
    for (const auto& [key, value, line] : parse_assignments(text, "<grid>")) {
        std::vector<std::string> values;
        std::stringstream ss(value);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (!item.empty()) values.push_back(item);
        }
        if (values.empty()) throw ConfigError("grid line " + std::to_string(line) + ": '" + key + "' has no values");
        grid.emplace_back(key, std::move(values));
    }
    if (grid.empty()) throw ConfigError("grid file names no hyper-parameters");
    return grid;
}

Grid load_grid(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("grid file '" + path.string() + "' not found");
    return parse_grid_text(read_file(path));
}

// --- data -------------------------------------------------------------------------

PreparedData prepare_data(const ExperimentConfig& cfg) {
    PreparedData out;
    const auto& arch = cfg.arch;
    switch (cfg.dataset) {
    case DatasetKind::Uci: {
        if (cfg.dataset_path.empty()) throw ConfigError("data", "dataset_path must name the UCI HAR root directory");
        UciSplits splits = load_uci(cfg.dataset_path);
        out.train = std::move(splits.train);
        out.test = std::move(splits.test);
        out.class_names = uci_class_names();
        if (cfg.normalize) {
            out.normalization = fit_normalizer(out.train.samples, cfg.target_std);
            apply_normalizer(*out.normalization, out.train.samples);
            apply_normalizer(*out.normalization, out.test.samples);
        }
        break;
    }
    case DatasetKind::Generic: {
        GenericSource src = load_generic(cfg.dataset_path);
        if (src.test_series.empty()) throw ConfigError("data", "generic manifest must list test_files");
        check_window_duration(arch.window_length, src.manifest.sample_rate_hz);
        std::vector<RawSeries> train_series, test_series;
        for (const auto& s : src.series) train_series.push_back(interpolate_gaps(s));
        for (const auto& s : src.test_series) test_series.push_back(interpolate_gaps(s));
        if (cfg.normalize) {
            out.normalization = fit_normalizer(train_series, cfg.target_std);
            for (auto& s : train_series) s = apply_normalizer(*out.normalization, s);
            for (auto& s : test_series) s = apply_normalizer(*out.normalization, s);
        }
        std::vector<WindowedDataset> train_parts, test_parts;
        const std::size_t classes = src.manifest.class_count;
        for (const auto& s : train_series)
            train_parts.push_back(slide_windows(s, arch.window_length, cfg.window_overlap, classes));
        for (const auto& s : test_series)
            test_parts.push_back(slide_windows(s, arch.window_length, cfg.window_overlap, classes));
        out.train = concat_datasets(train_parts);
        out.test = concat_datasets(test_parts);
        out.train.class_count = out.test.class_count = classes;
        break;
    }
    case DatasetKind::Toy: {
        if (arch.num_classes != 2) throw ConfigError("data", "the toy dataset has 2 classes; set num_classes = 2");
        out.train = make_toy_dataset(cfg.toy_train_count, arch.window_length, arch.input_channels, cfg.toy_seed);
        out.test = make_toy_dataset(cfg.toy_test_count, arch.window_length, arch.input_channels,
                                    mix_seed(cfg.toy_seed));
        out.class_names = {"negative", "positive"};
        if (cfg.normalize) {
            out.normalization = fit_normalizer(out.train.samples, cfg.target_std);
            apply_normalizer(*out.normalization, out.train.samples);
            apply_normalizer(*out.normalization, out.test.samples);
        }
        break;
    }
    }
    if (out.train.size() == 0 || out.test.size() == 0) throw ConfigError("data", "train or test split has no windows");
    if (out.train.channels() != arch.input_channels) {
        throw ConfigError("data", "dataset has " + std::to_string(out.train.channels()) +
                                      " channels but input_channels = " + std::to_string(arch.input_channels));
    }
    if (out.train.samples.dim(1) != arch.window_length) {
        throw ConfigError("data", "dataset windows have " + std::to_string(out.train.samples.dim(1)) +
                                      " steps but window_length = " + std::to_string(arch.window_length));
    }
    if (out.train.class_count != arch.num_classes) {
        throw ConfigError("data", "dataset has " + std::to_string(out.train.class_count) +
                                      " classes but num_classes = " + std::to_string(arch.num_classes));
    }
    return out;
}

// --- artifacts --------------------------------------------------------------------

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string epoch_table_tsv(const std::vector<EpochReport>& reports) {
    std::ostringstream os;
    os << "epoch\ttrain_loss\ttrain_accuracy\ttrain_f1\ttest_accuracy\ttest_f1\n";
    for (const auto& r : reports) {
        os << r.epoch << '\t' << fixed(r.train_loss) << '\t' << fixed(r.train_accuracy) << '\t' << fixed(r.train_f1)
           << '\t' << fixed(r.test_accuracy) << '\t' << fixed(r.test_f1) << '\n';
    }
    return os.str();
}

std::string f1_trend_tsv(const std::vector<EpochReport>& reports) {
    std::ostringstream os;
    os << "epoch\ttrain_f1\ttest_f1\n";
    for (const auto& r : reports) os << r.epoch << '\t' << fixed(r.train_f1) << '\t' << fixed(r.test_f1) << '\n';
    return os.str();
}

void write_run_artifacts(const fs::path& dir, const ExperimentConfig& cfg, const RunSummary& run) {
    fs::create_directories(dir);
    const TrainResult& r = run.result;
    write_file_atomic(dir / "config.cfg", run.config_text);
    write_file_atomic(dir / "epochs.tsv", epoch_table_tsv(r.reports));
    write_file_atomic(dir / "f1_trend.tsv", f1_trend_tsv(r.reports));
    std::ostringstream timing;
    timing << "epoch\twall_seconds\n";
    for (const auto& e : r.reports) timing << e.epoch << '\t' << real(e.wall_time) << '\n';
    write_file_atomic(dir / "timing.tsv", timing.str());
    save_checkpoint(dir / "checkpoint_final.ckpt", r.final_state);
    if (r.best) {
        TrainState best;
        best.params = r.best_params;
        best.adam = AdamState::zeros_like(r.best_params);
        best.epochs_done = r.best->epoch;
        save_checkpoint(dir / "checkpoint_best.ckpt", best);
    }
    write_file_atomic(dir / "confusion.tsv", confusion_to_tsv(run.final_test.confusion));
    write_file_atomic(dir / "confusion_percent.tsv", confusion_percent_tsv(run.final_test.confusion));
    const ClassScores scores = class_scores(run.final_test.confusion);
    write_file_atomic(dir / "scores.tsv", scores_to_tsv(scores));

    nlohmann::json summary;
    summary["artifact_version"] = kArtifactVersion;
    char hash[20];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a64(run.config_text)));
    summary["config_hash"] = hash;
    summary["seed"] = cfg.train.seed;
    summary["epochs_completed"] = r.final_state.epochs_done;
    summary["aborted"] = r.aborted;
    if (r.aborted) summary["abort_reason"] = r.abort_reason;
    summary["lstm_cells"] = cfg.arch.lstm_cell_count();
    summary["final"] = {{"confusion", to_json(run.final_test.confusion)}, {"scores", to_json(scores)}};
    if (r.best) summary["best"] = report_json(*r.best);
    auto epochs = nlohmann::json::array();
    for (const auto& e : r.reports) epochs.push_back(report_json(e));
    summary["epochs"] = epochs;
    write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
    std::ostringstream stamp;
    stamp << "artifact_version " << kArtifactVersion << "\nconfig_hash " << hash << "\nseed " << cfg.train.seed << '\n';
    write_file_atomic(dir / "stamp.txt", stamp.str());
}

RunSummary run_training(const ExperimentConfig& cfg, const PreparedData& data, const fs::path& dir, bool verbose) {
    fs::create_directories(dir);
    mark_incomplete(dir, "run in progress");
    try {
        RunSummary run;
        run.output_dir = dir;
        run.config_text = serialize_config(cfg);
        const EpochCallback cb = verbose ? EpochCallback(print_epoch) : EpochCallback{};
        run.result = train(cfg.arch, initial_state(cfg.arch, cfg.train), data.train, data.test, cfg.train, cb);
        if (run.result.final_test && run.result.final_state.epochs_done == cfg.train.epochs) {
            run.final_test = *run.result.final_test;
            run.final_test.confusion.class_names = data.class_names;
        } else {
            run.final_test = evaluate(cfg.arch, run.result.final_state.params, data.test, 256, data.class_names);
        }
        write_run_artifacts(dir, cfg, run);
        if (run.result.aborted) {
            mark_incomplete(dir, "training aborted: " + run.result.abort_reason);
            throw NumericError("training", "training aborted: " + run.result.abort_reason +
                                               " (last good checkpoint kept in " + dir.string() + ")");
        }
        fs::remove(dir / "INCOMPLETE");
        return run;
    } catch (const std::exception& e) {
        mark_incomplete(dir, e.what());
        throw;
    }
}

RunSummary cmd_train(const fs::path& config_path, const std::vector<std::string>& overrides, bool verbose) {
    ExperimentConfig cfg = load_config(config_path);
    for (const auto& o : overrides) apply_override(cfg, o);
    cfg.arch.validate();
    cfg.train.validate();
    const PreparedData data = prepare_data(cfg);
    return run_training(cfg, data, cfg.output_dir, verbose);
}

EvaluateReport cmd_evaluate(const fs::path& checkpoint_path, const fs::path& config_path,
                            const std::vector<std::string>& overrides) {
    ExperimentConfig cfg = load_config(config_path);
    for (const auto& o : overrides) apply_override(cfg, o);
    const TrainState state = load_checkpoint(checkpoint_path);
    check_params_match(cfg.arch, state.params);
    const PreparedData data = prepare_data(cfg);
    EvaluateReport report;
    report.test = evaluate(cfg.arch, state.params, data.test, 256, data.class_names);
    report.scores = class_scores(report.test.confusion);
    return report;
}

// --- grid search ---------------------------------------------------------------------

std::string ranking_tsv(const std::vector<TrialResult>& trials) {
    std::ostringstream os;
    os << "rank\ttrial\tsettings\tbest_test_f1\tbest_test_accuracy\tbest_epoch\n";
    for (std::size_t i = 0; i < trials.size(); ++i) {
        const auto& t = trials[i];
        os << i + 1 << '\t' << t.index << '\t' << t.label << '\t' << fixed(t.best_test_f1()) << '\t'
           << fixed(t.best_test_accuracy()) << '\t' << (t.result.best ? t.result.best->epoch : 0) << '\n';
    }
    return os.str();
}

std::vector<TrialResult> cmd_gridsearch(const fs::path& config_path, const fs::path& grid_path,
                                        const std::vector<std::string>& overrides, bool verbose) {
    ExperimentConfig cfg = load_config(config_path);
    for (const auto& o : overrides) apply_override(cfg, o);
    const Grid grid = load_grid(grid_path);
    for (const auto& point : expand_grid(grid)) {
        NetworkArchitecture a = cfg.arch;
        TrainConfig t = cfg.train;
        for (const auto& [k, v] : point) apply_hyperparameter(a, t, k, v);
        a.validate();
        t.validate();
    }
    const PreparedData data = prepare_data(cfg);
    const fs::path root = cfg.output_dir;
    fs::create_directories(root);
    mark_incomplete(root, "grid search in progress");
    auto trials = grid_search(cfg.arch, cfg.train, grid, data.train, data.test, cfg.threads,
                              [&](const TrialResult& t) {
                                  if (verbose) {
                                      std::printf("trial %zu (%s): best test f1 %.4f\n", t.index, t.label.c_str(),
                                                  t.best_test_f1());
                                      std::fflush(stdout);
                                  }
                              });
    for (const auto& t : trials) {
        ExperimentConfig trial_cfg = cfg;
        trial_cfg.arch = t.arch;
        trial_cfg.train = t.cfg;
        char name[32];
        std::snprintf(name, sizeof name, "trial_%03zu", t.index);
        trial_cfg.output_dir = (root / name).string();
        RunSummary run;
        run.output_dir = trial_cfg.output_dir;
        run.result = t.result;
        run.config_text = serialize_config(trial_cfg);
        run.final_test = t.result.final_test ? *t.result.final_test
                                             : evaluate(t.arch, t.result.final_state.params, data.test, 256);
        run.final_test.confusion.class_names = data.class_names;
        write_run_artifacts(run.output_dir, trial_cfg, run);
    }
    write_file_atomic(root / "ranking.tsv", ranking_tsv(trials));
    fs::remove(root / "INCOMPLETE");
    return trials;
}

// --- ablation ------------------------------------------------------------------------

std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg, const PreparedData& data, const fs::path& dir,
                                      bool verbose) {
    struct Variant {
        const char* name;
        bool residual;
        bool bidirectional;
    };
    const Variant variants[] = {{"LSTM", false, false},
                                {"Bidir-LSTM", false, true},
                                {"Res-LSTM", true, false},
                                {"Deep-Res-Bidir-LSTM", true, true}};
    fs::create_directories(dir);
    mark_incomplete(dir, "ablation in progress");
    std::vector<AblationRow> rows;
    std::ostringstream runs_table;
    runs_table << "variant\tseed\ttest_accuracy\ttest_f1\n";
    for (const auto& v : variants) {
        ExperimentConfig vcfg = cfg;
        vcfg.arch.residual = v.residual;
        vcfg.arch.block_residual.clear();
        vcfg.arch.bidirectional = v.bidirectional;
        std::vector<std::pair<double, RunSummary>> runs;
        for (std::size_t r = 0; r < cfg.ablation_repeats; ++r) {
            ExperimentConfig rcfg = vcfg;
            rcfg.train.seed = cfg.train.seed + r;
            RunSummary run;
            run.config_text = serialize_config(rcfg);
            run.result = train(rcfg.arch, initial_state(rcfg.arch, rcfg.train), data.train, data.test, rcfg.train);
            if (run.result.aborted) throw NumericError("training", std::string(v.name) + ": " + run.result.abort_reason);
            run.final_test = run.result.final_test
                                 ? *run.result.final_test
                                 : evaluate(rcfg.arch, run.result.final_state.params, data.test, 256);
            run.final_test.confusion.class_names = data.class_names;
            const double acc = accuracy(run.final_test.confusion);
            runs_table << v.name << '\t' << rcfg.train.seed << '\t' << fixed(acc) << '\t'
                       << fixed(weighted_f1(run.final_test.confusion)) << '\n';
            if (verbose) {
                std::printf("%s seed %llu: test accuracy %.4f\n", v.name,
                            static_cast<unsigned long long>(rcfg.train.seed), acc);
                std::fflush(stdout);
            }
            runs.emplace_back(acc, std::move(run));
        }
        std::vector<std::size_t> order(runs.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return runs[a].first < runs[b].first; });
        const std::size_t median = order[(order.size() - 1) / 2];
        const RunSummary& chosen = runs[median].second;
        AblationRow row;
        row.variant = v.name;
        row.residual = v.residual;
        row.bidirectional = v.bidirectional;
        row.confusion = chosen.final_test.confusion;
        row.accuracy = accuracy(row.confusion);
        row.weighted_f1 = weighted_f1(row.confusion);
        row.seed = cfg.train.seed + median;
        for (const auto& [acc, run] : runs) row.run_accuracies.push_back(acc);
        ExperimentConfig chosen_cfg = vcfg;
        chosen_cfg.train.seed = row.seed;
        write_run_artifacts(dir / v.name, chosen_cfg, chosen);
        rows.push_back(std::move(row));
    }
    write_file_atomic(dir / "ablation.tsv", ablation_tsv(rows));
    write_file_atomic(dir / "ablation_runs.tsv", runs_table.str());
    fs::remove(dir / "INCOMPLETE");
    return rows;
}

std::string ablation_tsv(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << "variant\tresidual\tbidirectional\taccuracy\tweighted_f1\tseed\n";
    for (const auto& r : rows) {
        os << r.variant << '\t' << boolean(r.residual) << '\t' << boolean(r.bidirectional) << '\t' << fixed(r.accuracy)
           << '\t' << fixed(r.weighted_f1) << '\t' << r.seed << '\n';
    }
    return os.str();
}

std::vector<AblationRow> cmd_ablation(const fs::path& config_path, const std::vector<std::string>& overrides,
                                      bool verbose) {
    ExperimentConfig cfg = load_config(config_path);
    for (const auto& o : overrides) apply_override(cfg, o);
    const PreparedData data = prepare_data(cfg);
    return run_ablation(cfg, data, cfg.output_dir, verbose);
}

} // namespace drbl
