#include "drbl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "drbl/errors.hpp"
#include "drbl/random.hpp"

namespace drbl {

namespace fs = std::filesystem;

namespace {

using Index = Eigen::Index;

Index idx(std::size_t n) { return static_cast<Index>(n); }

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::ifstream open_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    return in;
}

/// Whitespace-separated reals, one row per line; every row must have `width` values.
std::vector<double> read_rows(const fs::path& path, std::size_t width, std::size_t& rows) {
    std::ifstream in = open_file(path);
    std::vector<double> values;
    std::string line;
    rows = 0;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const char* p = line.c_str();
        std::size_t n = 0;
        while (true) {
            char* end = nullptr;
            const double v = std::strtod(p, &end);
            if (end == p) break;
            values.push_back(v);
            ++n;
            p = end;
        }
        if (n == 0 && trim(line).empty()) continue;
        if (n != width) {
            throw DataError("'" + path.string() + "' line " + std::to_string(line_no) + " has " + std::to_string(n) +
                            " values, expected " + std::to_string(width));
        }
        ++rows;
    }
    return values;
}

std::vector<int> read_labels(const fs::path& path) {
    std::ifstream in = open_file(path);
    std::vector<int> labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty()) continue;
        char* end = nullptr;
        const long v = std::strtol(t.c_str(), &end, 10);
        if (*end != '\0') throw DataError("'" + path.string() + "' line " + std::to_string(line_no) + " is not an integer");
        labels.push_back(static_cast<int>(v));
    }
    return labels;
}

WindowedDataset load_uci_split(const fs::path& root, const std::string& split) {
    constexpr std::size_t kSteps = 128;
    const auto& channels = uci_channel_names();
    const fs::path signal_dir = root / split / "Inertial Signals";
    const fs::path label_path = root / split / ("y_" + split + ".txt");
    for (const auto& name : channels) {
        const fs::path p = signal_dir / (name + "_" + split + ".txt");
        if (!fs::exists(p)) throw DataError("missing UCI channel file '" + p.string() + "'");
    }
    if (!fs::exists(label_path)) throw DataError("missing UCI label file '" + label_path.string() + "'");

    std::vector<std::vector<double>> per_channel;
    std::size_t rows = 0;
    for (std::size_t c = 0; c < channels.size(); ++c) {
        const fs::path p = signal_dir / (channels[c] + "_" + split + ".txt");
        std::size_t r = 0;
        per_channel.push_back(read_rows(p, kSteps, r));
        if (c == 0) {
            rows = r;
        } else if (r != rows) {
            throw DataError("UCI " + split + " channel files disagree on row count: " + channels[0] + " has " +
                            std::to_string(rows) + ", " + channels[c] + " has " + std::to_string(r));
        }
    }
    std::vector<int> labels = read_labels(label_path);
    if (labels.size() != rows) {
        throw DataError("UCI " + split + " has " + std::to_string(rows) + " signal rows but " +
                        std::to_string(labels.size()) + " labels");
    }
    if (rows == 0) throw DataError("UCI " + split + " split is empty");
    const std::size_t d = channels.size();
    WindowedDataset ds;
    ds.samples = Tensor(Shape{rows, kSteps, d});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t t = 0; t < kSteps; ++t)
            for (std::size_t c = 0; c < d; ++c) ds.samples.at(r, t, c) = per_channel[c][r * kSteps + t];
    for (int& l : labels) {
        if (l < 1 || l > 6) throw DataError("UCI label " + std::to_string(l) + " outside 1..6");
        l -= 1;
    }
    ds.labels = std::move(labels);
    ds.class_count = 6;
    ds.window_size = kSteps;
    ds.step = kSteps;
    return ds;
}

char delimiter_char(const std::string& name) {
    if (name == "comma") return ',';
    if (name == "tab") return '\t';
    if (name == "space") return ' ';
    if (name == "whitespace") return '\0';
    if (name.size() == 1) return name[0];
    throw ConfigError("data", "unknown delimiter '" + name + "'");
}

std::vector<std::string> split_cells(const std::string& line, char delim) {
    std::vector<std::string> cells;
    if (delim == '\0') {
        std::istringstream is(line);
        std::string cell;
        while (is >> cell) cells.push_back(cell);
        return cells;
    }
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, delim)) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == delim) cells.emplace_back();
    return cells;
}

} // namespace

// --- dataset helpers ---------------------------------------------------------

Tensor WindowedDataset::gather(std::span<const std::size_t> indices) const {
    const std::size_t t = samples.dim(1), d = samples.dim(2);
    const Index row = idx(t * d);
    Tensor out(Shape{indices.size(), t, d});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        out.data().segment(idx(i) * row, row) = samples.data().segment(idx(indices[i]) * row, row);
    }
    return out;
}

std::vector<int> WindowedDataset::gather_labels(std::span<const std::size_t> indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(labels.at(i));
    return out;
}

std::vector<std::size_t> WindowedDataset::class_supports() const {
    std::vector<std::size_t> counts(class_count, 0);
    for (int l : labels) ++counts.at(static_cast<std::size_t>(l));
    return counts;
}

const std::vector<std::string>& uci_channel_names() {
    static const std::vector<std::string> names = {"body_acc_x",  "body_acc_y",  "body_acc_z",
                                                   "total_acc_x", "total_acc_y", "total_acc_z",
                                                   "body_gyro_x", "body_gyro_y", "body_gyro_z"};
    return names;
}

const std::vector<std::string>& uci_class_names() {
    static const std::vector<std::string> names = {"WALKING", "WALKING_UPSTAIRS", "WALKING_DOWNSTAIRS",
                                                   "SITTING", "STANDING",         "LAYING"};
    return names;
}

UciSplits load_uci(const fs::path& root) {
    return {load_uci_split(root, "train"), load_uci_split(root, "test")};
}

// --- gaps ----------------------------------------------------------------------

RawSeries interpolate_gaps(const RawSeries& series) {
    RawSeries out = series;
    const Index n = series.values.rows();
    for (Index c = 0; c < series.values.cols(); ++c) {
        auto col = out.values.col(c);
        Index prev = -1;
        for (Index r = 0; r < n; ++r) {
            if (std::isnan(col(r))) continue;
            if (prev < 0) {
                for (Index k = 0; k < r; ++k) col(k) = col(r);
            } else if (r - prev > 1) {
                const double a = col(prev), b = col(r);
                const double span = static_cast<double>(r - prev);
                for (Index k = prev + 1; k < r; ++k) col(k) = a + (b - a) * static_cast<double>(k - prev) / span;
            }
            prev = r;
        }
        if (prev < 0) {
            throw DataError("channel " + std::to_string(c) + " contains no observed values; cannot interpolate");
        }
        for (Index k = prev + 1; k < n; ++k) col(k) = col(prev);
    }
    return out;
}

// --- normalization ---------------------------------------------------------------

namespace {

NormalizationStats finish_stats(const Vector& sum, const Vector& sq_dev_sum, double count, double target_std) {
    NormalizationStats stats;
    stats.target_std = target_std;
    stats.mu = sum / count;
    stats.sigma = (sq_dev_sum / count).cwiseSqrt();
    for (Index c = 0; c < stats.sigma.size(); ++c) {
        if (!(stats.sigma(c) > 0.0)) {
            warn("channel " + std::to_string(c) + " has zero variance; it will normalize to a constant 0");
            stats.sigma(c) = 1.0;
            stats.degenerate_channels.push_back(static_cast<std::size_t>(c));
        }
    }
    return stats;
}

} // namespace

NormalizationStats fit_normalizer(std::span<const RawSeries> series, double target_std) {
    if (series.empty()) throw DataError("cannot fit a normalizer on no data");
    const Index d = series.front().values.cols();
    Vector sum = Vector::Zero(d);
    double count = 0;
    for (const auto& s : series) {
        if (s.values.cols() != d) throw DimensionError("data", "series disagree on channel count");
        sum += s.values.colwise().sum().transpose();
        count += static_cast<double>(s.values.rows());
    }
    if (count == 0) throw DataError("cannot fit a normalizer on empty series");
    const Vector mean = sum / count;
    Vector sq = Vector::Zero(d);
    for (const auto& s : series) sq += (s.values.rowwise() - mean.transpose()).array().square().colwise().sum().matrix().transpose();
    return finish_stats(sum, sq, count, target_std);
}

NormalizationStats fit_normalizer(const Tensor& windows, double target_std) {
    if (windows.empty()) throw DataError("cannot fit a normalizer on no data");
    const auto m = windows.matrix();
    const Vector sum = m.colwise().sum().transpose();
    const double count = static_cast<double>(m.rows());
    const Vector mean = sum / count;
    const Vector sq = (m.rowwise() - mean.transpose()).array().square().colwise().sum().matrix().transpose();
    return finish_stats(sum, sq, count, target_std);
}

RawSeries apply_normalizer(const NormalizationStats& stats, const RawSeries& series) {
    RawSeries out = series;
    const Eigen::RowVectorXd scale = (stats.target_std / stats.sigma.array()).matrix().transpose();
    out.values = ((series.values.rowwise() - stats.mu.transpose()).array().rowwise() * scale.array()).matrix();
    return out;
}

void apply_normalizer(const NormalizationStats& stats, Tensor& windows) {
    if (windows.empty()) return;
    auto m = windows.matrix();
    if (m.cols() != stats.mu.size()) throw DimensionError("data", "normalizer channel count mismatch");
    const Eigen::RowVectorXd scale = (stats.target_std / stats.sigma.array()).matrix().transpose();
    m = ((m.rowwise() - stats.mu.transpose()).array().rowwise() * scale.array()).matrix();
}

// --- windows ---------------------------------------------------------------------

std::size_t window_count(std::size_t length, std::size_t window, std::size_t step) {
    if (window == 0 || step == 0) throw ConfigError("data", "window size and step must be positive");
    if (window > length) return 0;
    return (length - window) / step + 1;
}

std::size_t overlap_step(std::size_t window, double overlap) {
    if (!(overlap >= 0.0 && overlap < 1.0)) throw ConfigError("data", "overlap must lie in [0, 1)");
    const auto overlapped = static_cast<std::size_t>(std::llround(static_cast<double>(window) * overlap));
    return std::max<std::size_t>(1, window - overlapped);
}

WindowedDataset slide_windows(const RawSeries& series, std::size_t window, double overlap, std::size_t class_count) {
    return slide_windows_step(series, window, overlap_step(window, overlap), class_count);
}

WindowedDataset slide_windows_step(const RawSeries& series, std::size_t window, std::size_t step,
                                   std::size_t class_count) {
    if (series.labels.size() != series.length()) {
        throw DataError("series has " + std::to_string(series.length()) + " steps but " +
                        std::to_string(series.labels.size()) + " labels");
    }
    WindowedDataset ds;
    ds.class_count = class_count;
    ds.window_size = window;
    ds.step = step;
    const std::size_t n = window_count(series.length(), window, step);
    if (n == 0) {
        warn("window of " + std::to_string(window) + " steps exceeds series length " +
             std::to_string(series.length()) + "; no windows produced");
        return ds;
    }
    const std::size_t d = series.channels();
    ds.samples = Tensor(Shape{n, window, d});
    ds.labels.reserve(n);
    for (std::size_t w = 0; w < n; ++w) {
        const std::size_t start = w * step;
        for (std::size_t t = 0; t < window; ++t)
            for (std::size_t c = 0; c < d; ++c) ds.samples.at(w, t, c) = series.values(idx(start + t), idx(c));
        const int label = series.labels[start + window - 1];
        if (label < 0 || static_cast<std::size_t>(label) >= class_count) {
            throw LabelError("data", "label " + std::to_string(label) + " at step " +
                                         std::to_string(start + window - 1) + " outside [0, " +
                                         std::to_string(class_count) + ")");
        }
        ds.labels.push_back(label);
    }
    return ds;
}

WindowedDataset concat_datasets(const std::vector<WindowedDataset>& parts) {
    WindowedDataset out;
    std::size_t total = 0;
    const WindowedDataset* first = nullptr;
    for (const auto& p : parts) {
        if (p.size() == 0) continue;
        if (!first) first = &p;
        if (p.samples.dim(1) != first->samples.dim(1) || p.samples.dim(2) != first->samples.dim(2) ||
            p.class_count != first->class_count) {
            throw DimensionError("data", "cannot concatenate datasets with different window shapes or classes");
        }
        total += p.size();
    }
    if (!parts.empty()) {
        out.class_count = parts.front().class_count;
        out.window_size = parts.front().window_size;
        out.step = parts.front().step;
    }
    if (!first) return out;
    out.samples = Tensor(Shape{total, first->samples.dim(1), first->samples.dim(2)});
    Index offset = 0;
    for (const auto& p : parts) {
        if (p.size() == 0) continue;
        out.samples.data().segment(offset, p.samples.data().size()) = p.samples.data();
        offset += p.samples.data().size();
        out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    }
    return out;
}

// --- generic streams -------------------------------------------------------------

GenericManifest parse_manifest(const fs::path& manifest_path) {
    std::ifstream in = open_file(manifest_path);
    GenericManifest m;
    m.base_dir = manifest_path.parent_path();
    std::string line;
    std::size_t line_no = 0;
    bool has_channels = false, has_label = false, has_classes = false;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("data", manifest_path.string() + ":" + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "files") m.files = split_list(value);
            else if (key == "test_files") m.test_files = split_list(value);
            else if (key == "delimiter") { m.delimiter = value; delimiter_char(value); }
            else if (key == "channels") { m.channels = std::stoul(value); has_channels = true; }
            else if (key == "label_column") { m.label_column = std::stoul(value); has_label = true; }
            else if (key == "gap") m.gap_sentinel = value;
            else if (key == "sample_rate_hz") m.sample_rate_hz = std::stod(value);
            else if (key == "class_count") { m.class_count = std::stoul(value); has_classes = true; }
            else if (key == "header_lines") m.header_lines = std::stoul(value);
            else throw ConfigError("data", "unknown manifest key '" + key + "'");
        } catch (const std::logic_error&) {
            throw ConfigError("data", manifest_path.string() + ":" + std::to_string(line_no) + ": bad value for '" +
                                          key + "'");
        }
    }
    if (m.files.empty()) throw ConfigError("data", "manifest names no files");
    if (!has_channels || m.channels == 0) throw ConfigError("data", "manifest must declare channels >= 1");
    if (!has_label) throw ConfigError("data", "manifest must declare label_column");
    if (!has_classes || m.class_count == 0) throw ConfigError("data", "manifest must declare class_count >= 1");
    if (m.label_column > m.channels) throw ConfigError("data", "label_column exceeds the column count");
    return m;
}

RawSeries load_series_file(const fs::path& path, const GenericManifest& manifest, std::size_t* gap_count) {
    std::ifstream in = open_file(path);
    const char delim = delimiter_char(manifest.delimiter);
    const std::size_t columns = manifest.channels + 1;
    std::vector<double> values;
    std::vector<int> labels;
    std::string line;
    std::size_t line_no = 0;
    std::size_t gaps = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no <= manifest.header_lines) continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto cells = split_cells(line, delim);
        if (cells.size() != columns) {
            throw DataError("'" + path.string() + "' line " + std::to_string(line_no) + " has " +
                            std::to_string(cells.size()) + " columns, expected " + std::to_string(columns));
        }
        for (std::size_t c = 0; c < columns; ++c) {
            const std::string& cell = cells[c];
            if (c == manifest.label_column) {
                char* end = nullptr;
                const long v = std::strtol(cell.c_str(), &end, 10);
                if (cell.empty() || *end != '\0') {
                    throw DataError("'" + path.string() + "' line " + std::to_string(line_no) + ": bad label '" +
                                    cell + "'");
                }
                if (manifest.class_count > 0 && (v < 0 || static_cast<std::size_t>(v) >= manifest.class_count)) {
                    throw LabelError("data", "'" + path.string() + "' line " + std::to_string(line_no) + ": label " +
                                                 cell + " outside 0.." + std::to_string(manifest.class_count - 1));
                }
                labels.push_back(static_cast<int>(v));
                continue;
            }
            if (cell == manifest.gap_sentinel) {
                values.push_back(std::numeric_limits<double>::quiet_NaN());
                ++gaps;
                continue;
            }
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (cell.empty() || *end != '\0') {
                throw DataError("'" + path.string() + "' line " + std::to_string(line_no) + ": bad value '" + cell + "'");
            }
            values.push_back(v);
        }
    }
    RawSeries s;
    s.values = Eigen::Map<const Matrix>(values.data(), idx(labels.size()), idx(manifest.channels));
    s.labels = std::move(labels);
    if (gap_count) *gap_count += gaps;
    return s;
}

GenericSource load_generic(const fs::path& manifest_path) {
    GenericSource src;
    src.manifest = parse_manifest(manifest_path);
    for (const auto& f : src.manifest.files)
        src.series.push_back(load_series_file(src.manifest.base_dir / f, src.manifest, &src.gap_count));
    for (const auto& f : src.manifest.test_files)
        src.test_series.push_back(load_series_file(src.manifest.base_dir / f, src.manifest, &src.gap_count));
    if (src.gap_count > 0) warn(std::to_string(src.gap_count) + " gap cells found in " + manifest_path.string());
    return src;
}

void check_window_duration(std::size_t window, double sample_rate_hz) {
    if (!(sample_rate_hz > 0.0)) return;
    const double seconds = static_cast<double>(window) / sample_rate_hz;
    if (seconds < 0.5 || seconds > 5.0) {
        warn("window of " + std::to_string(window) + " steps spans " + std::to_string(seconds) +
             " s; 0.5 s to 5 s usually works best");
    }
}

WindowedDataset make_toy_dataset(std::size_t count, std::size_t window, std::size_t channels, std::uint64_t seed) {
    if (count == 0 || window == 0 || channels == 0) throw ConfigError("data", "toy dataset dimensions must be positive");
    Rng rng(seed);
    WindowedDataset ds;
    ds.samples = Tensor(Shape{count, window, channels});
    ds.class_count = 2;
    ds.window_size = window;
    ds.step = window;
    for (std::size_t n = 0; n < count; ++n) {
        for (std::size_t t = 0; t < window; ++t)
            for (std::size_t c = 0; c < channels; ++c) ds.samples.at(n, t, c) = 0.5 * rng.normal();
        const bool positive = rng.uniform() < 0.5;
        const double magnitude = 0.25 + std::abs(0.5 * rng.normal());
        ds.samples.at(n, window - 1, 0) = positive ? magnitude : -magnitude;
        ds.labels.push_back(positive ? 1 : 0);
    }
    return ds;
}

} // namespace drbl
