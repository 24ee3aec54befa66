#include "drbl/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "drbl/errors.hpp"

namespace drbl {

namespace {

using Index = Eigen::Index;

void require_nonempty(const ConfusionMatrix& cm, const char* metric) {
    if (cm.classes() == 0 || cm.total() <= 0) {
        throw NumericError("metrics", std::string(metric) + " is undefined for an empty confusion matrix");
    }
}

std::string name_of(const ConfusionMatrix& cm, std::size_t c) {
    return c < cm.class_names.size() ? cm.class_names[c] : "class" + std::to_string(c);
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

} // namespace

ConfusionMatrix ConfusionMatrix::from_counts(const std::vector<std::vector<std::int64_t>>& rows,
                                             std::vector<std::string> names) {
    ConfusionMatrix cm;
    const Index n = static_cast<Index>(rows.size());
    cm.counts = CountMatrix::Zero(n, n);
    for (Index r = 0; r < n; ++r) {
        if (static_cast<Index>(rows[static_cast<std::size_t>(r)].size()) != n) {
            throw DimensionError("metrics", "confusion matrix rows must have " + std::to_string(n) + " entries");
        }
        for (Index c = 0; c < n; ++c) {
            const auto v = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
            if (v < 0) throw LabelError("metrics", "confusion counts must be non-negative");
            cm.counts(r, c) = v;
        }
    }
    cm.class_names = std::move(names);
    return cm;
}

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> actuals, std::size_t classes,
                          std::vector<std::string> class_names) {
    if (predictions.size() != actuals.size()) {
        throw DimensionError("metrics", "predictions (" + std::to_string(predictions.size()) + ") and actuals (" +
                                            std::to_string(actuals.size()) + ") differ in length");
    }
    ConfusionMatrix cm;
    cm.counts = CountMatrix::Zero(static_cast<Index>(classes), static_cast<Index>(classes));
    cm.class_names = std::move(class_names);
    const int n = static_cast<int>(classes);
    for (std::size_t i = 0; i < actuals.size(); ++i) {
        const int a = actuals[i], p = predictions[i];
        if (a < 0 || a >= n || p < 0 || p >= n) {
            throw LabelError("metrics", "label out of range [0, " + std::to_string(classes) + ") at index " +
                                            std::to_string(i) + " (actual " + std::to_string(a) + ", predicted " +
                                            std::to_string(p) + ")");
        }
        ++cm.counts(a, p);
    }
    return cm;
}

double accuracy(const ConfusionMatrix& cm) {
    require_nonempty(cm, "accuracy");
    return static_cast<double>(cm.correct()) / static_cast<double>(cm.total());
}

bool PrecisionRecall::has_warning() const {
    for (bool b : precision_undefined) if (b) return true;
    for (bool b : recall_undefined) if (b) return true;
    return false;
}

PrecisionRecall precision_recall(const ConfusionMatrix& cm) {
    require_nonempty(cm, "precision/recall");
    PrecisionRecall pr;
    const std::size_t n = cm.classes();
    pr.precision.assign(n, 0.0);
    pr.recall.assign(n, 0.0);
    pr.precision_undefined.assign(n, false);
    pr.recall_undefined.assign(n, false);
    for (std::size_t c = 0; c < n; ++c) {
        const auto hit = static_cast<double>(cm.counts(static_cast<Index>(c), static_cast<Index>(c)));
        const auto col = cm.predicted(c), row = cm.support(c);
        if (col > 0) pr.precision[c] = hit / static_cast<double>(col);
        else pr.precision_undefined[c] = true;
        if (row > 0) pr.recall[c] = hit / static_cast<double>(row);
        else pr.recall_undefined[c] = true;
    }
    return pr;
}

double f1_binary(double precision, double recall) {
    const double denom = precision + recall;
    return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

double weighted_f1(const ConfusionMatrix& cm) {
    const PrecisionRecall pr = precision_recall(cm);
    const double total = static_cast<double>(cm.total());
    double f1 = 0.0;
    for (std::size_t c = 0; c < cm.classes(); ++c) {
        const auto support = cm.support(c);
        if (support == 0) continue;
        f1 += static_cast<double>(support) / total * f1_binary(pr.precision[c], pr.recall[c]);
    }
    return f1;
}

ClassScores class_scores(const ConfusionMatrix& cm) {
    const PrecisionRecall pr = precision_recall(cm);
    ClassScores s;
    for (std::size_t c = 0; c < cm.classes(); ++c) {
        s.per_class.push_back({name_of(cm, c), pr.precision[c], pr.recall[c], f1_binary(pr.precision[c], pr.recall[c]),
                               cm.support(c)});
    }
    s.accuracy = accuracy(cm);
    s.weighted_f1 = weighted_f1(cm);
    s.warning = pr.has_warning();
    return s;
}

std::string confusion_to_tsv(const ConfusionMatrix& cm) {
    std::ostringstream os;
    os << "actual\\predicted";
    for (std::size_t c = 0; c < cm.classes(); ++c) os << '\t' << name_of(cm, c);
    os << "\trecall\n";
    const PrecisionRecall pr = precision_recall(cm);
    for (std::size_t r = 0; r < cm.classes(); ++r) {
        os << name_of(cm, r);
        for (std::size_t c = 0; c < cm.classes(); ++c) os << '\t' << cm.counts(static_cast<Index>(r), static_cast<Index>(c));
        os << '\t' << fixed(pr.recall[r], 6) << '\n';
    }
    os << "precision";
    for (std::size_t c = 0; c < cm.classes(); ++c) os << '\t' << fixed(pr.precision[c], 6);
    os << '\t' << fixed(accuracy(cm), 6) << '\n';
    return os.str();
}

std::string confusion_percent_tsv(const ConfusionMatrix& cm) {
    std::ostringstream os;
    os << "actual\\predicted";
    for (std::size_t c = 0; c < cm.classes(); ++c) os << '\t' << name_of(cm, c);
    os << '\n';
    for (std::size_t r = 0; r < cm.classes(); ++r) {
        os << name_of(cm, r);
        const auto support = static_cast<double>(cm.support(r));
        for (std::size_t c = 0; c < cm.classes(); ++c) {
            const auto v = static_cast<double>(cm.counts(static_cast<Index>(r), static_cast<Index>(c)));
            os << '\t' << fixed(support > 0 ? 100.0 * v / support : 0.0, 4);
        }
        os << '\n';
    }
    return os.str();
}

std::string scores_to_tsv(const ClassScores& scores) {
    std::ostringstream os;
    os << "class\tprecision\trecall\tf1\tsupport\n";
    for (const auto& c : scores.per_class) {
        os << c.name << '\t' << fixed(c.precision, 6) << '\t' << fixed(c.recall, 6) << '\t' << fixed(c.f1, 6) << '\t'
           << c.support << '\n';
    }
    os << "accuracy\t" << fixed(scores.accuracy, 6) << '\n';
    os << "weighted_f1\t" << fixed(scores.weighted_f1, 6) << '\n';
    return os.str();
}

nlohmann::json to_json(const ConfusionMatrix& cm) {
    nlohmann::json j;
    j["classes"] = cm.class_names;
    auto rows = nlohmann::json::array();
    for (Index r = 0; r < cm.counts.rows(); ++r) {
        auto row = nlohmann::json::array();
        for (Index c = 0; c < cm.counts.cols(); ++c) row.push_back(cm.counts(r, c));
        rows.push_back(row);
    }
    j["counts"] = rows;
    return j;
}

nlohmann::json to_json(const ClassScores& scores) {
    nlohmann::json j;
    j["accuracy"] = scores.accuracy;
    j["weighted_f1"] = scores.weighted_f1;
    j["warning"] = scores.warning;
    auto classes = nlohmann::json::array();
    for (const auto& c : scores.per_class) {
        classes.push_back({{"name", c.name}, {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1},
                           {"support", c.support}});
    }
    j["per_class"] = classes;
    return j;
}

ConfusionMatrix confusion_from_json(const nlohmann::json& j) {
    return ConfusionMatrix::from_counts(j.at("counts").get<std::vector<std::vector<std::int64_t>>>(),
                                        j.value("classes", std::vector<std::string>{}));
}

} // namespace drbl
