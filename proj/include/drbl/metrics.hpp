#ifndef DRBL_METRICS_HPP
#define DRBL_METRICS_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace drbl {

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Rows are actual classes, columns predicted classes.
struct ConfusionMatrix {
    CountMatrix counts;
    std::vector<std::string> class_names;

    std::size_t classes() const { return static_cast<std::size_t>(counts.rows()); }
    std::int64_t total() const { return counts.sum(); }
    std::int64_t support(std::size_t c) const { return counts.row(static_cast<Eigen::Index>(c)).sum(); }
    std::int64_t predicted(std::size_t c) const { return counts.col(static_cast<Eigen::Index>(c)).sum(); }
    std::int64_t correct() const { return counts.trace(); }

    static ConfusionMatrix from_counts(const std::vector<std::vector<std::int64_t>>& rows,
                                       std::vector<std::string> names = {});
};

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> actuals, std::size_t classes,
                          std::vector<std::string> class_names = {});

double accuracy(const ConfusionMatrix& cm);

/// Zero denominators give a score of 0 and set the matching flag.
struct PrecisionRecall {
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<bool> precision_undefined;
    std::vector<bool> recall_undefined;

    bool has_warning() const;
};

PrecisionRecall precision_recall(const ConfusionMatrix& cm);

double f1_binary(double precision, double recall);

/// Σ_c (N_c / N_total) · F1_c with N_c the actual (row) support.
double weighted_f1(const ConfusionMatrix& cm);

struct ClassScore {
    std::string name;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::int64_t support = 0;
};

struct ClassScores {
    std::vector<ClassScore> per_class;
    double accuracy = 0.0;
    double weighted_f1 = 0.0;
    bool warning = false;
};

ClassScores class_scores(const ConfusionMatrix& cm);

/// Tab-separated counts with a recall column per row and a precision row
/// whose last cell is the overall accuracy.
std::string confusion_to_tsv(const ConfusionMatrix& cm);
/// Row-normalized percentages (each actual-class row sums to 100).
std::string confusion_percent_tsv(const ConfusionMatrix& cm);
std::string scores_to_tsv(const ClassScores& scores);
nlohmann::json to_json(const ConfusionMatrix& cm);
nlohmann::json to_json(const ClassScores& scores);
ConfusionMatrix confusion_from_json(const nlohmann::json& j);

} // namespace drbl

#endif // DRBL_METRICS_HPP
