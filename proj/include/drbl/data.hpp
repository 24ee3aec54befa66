#ifndef DRBL_DATA_HPP
#define DRBL_DATA_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "drbl/tensor.hpp"

namespace drbl {

/// A multichannel stream with one label per time step. Gaps are NaN.
struct RawSeries {
    Matrix values;            ///< [time x channels]
    std::vector<int> labels;  ///< one per time step

    std::size_t length() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t channels() const { return static_cast<std::size_t>(values.cols()); }
};

struct NormalizationStats {
    Vector mu;
    Vector sigma;
    double target_std = 0.5;
    /// Channels whose variance was zero; their sigma was replaced by 1.
    std::vector<std::size_t> degenerate_channels;
};

/// Windows [sampleNum x windowSize x channels] with one label per window.
struct WindowedDataset {
    Tensor samples;
    std::vector<int> labels;
    std::size_t class_count = 0;
    std::size_t window_size = 0;
    std::size_t step = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t channels() const { return samples.empty() ? 0 : samples.dim(2); }

    /// Copies the selected windows, in the given order, into a batch tensor.
    Tensor gather(std::span<const std::size_t> indices) const;
    std::vector<int> gather_labels(std::span<const std::size_t> indices) const;
    /// Per-class window counts.
    std::vector<std::size_t> class_supports() const;
};

struct UciSplits {
    WindowedDataset train;
    WindowedDataset test;
};

/// Channel files in the order they are stacked on the feature axis.
const std::vector<std::string>& uci_channel_names();
const std::vector<std::string>& uci_class_names();

/// Reads `<root>/{train,test}/Inertial Signals/<channel>_<split>.txt` and
/// `<root>/{train,test}/y_<split>.txt`. Labels become 0-based.
UciSplits load_uci(const std::filesystem::path& root);

/// Linear interpolation across interior gap runs, constant extension at the
/// ends. Observed values are kept bitwise.
RawSeries interpolate_gaps(const RawSeries& series);

/// Population mean and standard deviation per channel over every time step
/// of every series.
NormalizationStats fit_normalizer(std::span<const RawSeries> series, double target_std = 0.5);
/// Same statistics over every (window, step) row of a [N x T x d] tensor.
NormalizationStats fit_normalizer(const Tensor& windows, double target_std = 0.5);

/// x* = target_std * (x - mu) / sigma per channel.
RawSeries apply_normalizer(const NormalizationStats& stats, const RawSeries& series);
void apply_normalizer(const NormalizationStats& stats, Tensor& windows);

std::size_t window_count(std::size_t length, std::size_t window, std::size_t step);
/// Step between window starts for a fractional overlap in [0, 1).
std::size_t overlap_step(std::size_t window, double overlap);

/// Windows starting at 0, step, 2*step, ...; each labeled with the class at
/// its final step. A window longer than the series yields an empty dataset.
WindowedDataset slide_windows(const RawSeries& series, std::size_t window, double overlap, std::size_t class_count);
WindowedDataset slide_windows_step(const RawSeries& series, std::size_t window, std::size_t step,
                                   std::size_t class_count);

/// Concatenates datasets that share window size, channels and classes.
WindowedDataset concat_datasets(const std::vector<WindowedDataset>& parts);

/// Declarative description of delimited-text streams, one `key = value` per line:
///   files = a.csv, b.csv        (relative to the manifest's directory)
///   test_files = c.csv          (optional)
///   delimiter = comma | tab | space | whitespace | <single character>
///   channels = 2
///   label_column = 2            (0-based column index of the label)
///   gap = NaN                   (cell text marking a missing value)
///   sample_rate_hz = 50
///   class_count = 3
///   header_lines = 0
struct GenericManifest {
    std::filesystem::path base_dir;
    std::vector<std::string> files;
    std::vector<std::string> test_files;
    std::string delimiter = "comma";
    std::size_t channels = 0;
    std::size_t label_column = 0;
    std::string gap_sentinel = "NaN";
    double sample_rate_hz = 0.0;
    std::size_t class_count = 0;
    std::size_t header_lines = 0;
};

struct GenericSource {
    GenericManifest manifest;
    std::vector<RawSeries> series;
    std::vector<RawSeries> test_series;
    std::size_t gap_count = 0;
};

GenericManifest parse_manifest(const std::filesystem::path& manifest_path);
RawSeries load_series_file(const std::filesystem::path& path, const GenericManifest& manifest,
                           std::size_t* gap_count = nullptr);
GenericSource load_generic(const std::filesystem::path& manifest_path);

/// Warns when a window spans less than 0.5 s or more than 5 s of signal.
void check_window_duration(std::size_t window, double sample_rate_hz);

/// Two-class set decided by the sign of channel 0 at the last step; all
/// other values are Gaussian noise with standard deviation 0.5.
WindowedDataset make_toy_dataset(std::size_t count, std::size_t window, std::size_t channels, std::uint64_t seed);

} // namespace drbl

#endif // DRBL_DATA_HPP
