#ifndef DRBL_GRAD_CHECK_HPP
#define DRBL_GRAD_CHECK_HPP

#include <functional>
#include <string>

#include "drbl/param_store.hpp"

namespace drbl {

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::string worst_parameter_path;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    /// Relative error with the denominator floored at `noise_floor` instead
    /// of 1e-8: entries smaller than the floor are judged by absolute error.
    double max_floored_error = 0.0;
    double noise_floor = 0.0;
    double epsilon = 0.0;
    std::size_t checked = 0;
};

/// Compares the analytic gradients already stored in `params` against central
/// differences (L(θ+ε) − L(θ−ε)) / 2ε of `loss`, one scalar at a time.
/// Relative error is |a − n| / max(|a|, |n|, 1e-8). Parameters are restored
/// bitwise after each perturbation.
GradCheckReport grad_check(const std::function<double()>& loss, ParamStore& params, double epsilon,
                           double noise_floor = 1e-5);

} // namespace drbl

#endif // DRBL_GRAD_CHECK_HPP
