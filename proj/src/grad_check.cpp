#include "drbl/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace drbl {

GradCheckReport grad_check(const std::function<double()>& loss, ParamStore& params, double epsilon,
                           double noise_floor) {
    if (!(epsilon > 0.0)) throw ConfigError("numerics", "grad_check epsilon must be positive");
    GradCheckReport report;
    report.epsilon = epsilon;
    report.noise_floor = noise_floor;
    for (const std::string& path : params.paths()) {
        Tensor& value = params.param(path);
        const Tensor& analytic = params.grad(path);
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double original = value[i];
            value[i] = original + epsilon;
            const double up = loss();
            value[i] = original - epsilon;
            const double down = loss();
            value[i] = original;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw NumericError("numerics", "non-finite loss while perturbing '" + path + "'[" +
                                                   std::to_string(i) + "]");
            }
            const double numeric = (up - down) / (2.0 * epsilon);
            const double a = analytic[i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            ++report.checked;
            const double floored = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), noise_floor});
            report.max_floored_error = std::max(report.max_floored_error, floored);
            if (rel > report.max_relative_error || report.worst_parameter_path.empty()) {
                report.max_relative_error = std::max(rel, report.max_relative_error);
                report.worst_parameter_path = path;
                report.worst_index = i;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

} // namespace drbl
