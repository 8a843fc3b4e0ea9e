#pragma once

#include <functional>

#include "rmlab/numarray.hpp"

namespace rmlab {

struct GradReport {
    NumArray analytic;
    NumArray numeric;
    double max_rel_error = 0.0;
};

// Loss closure over a flat parameter vector. When `grad_out` is non-empty the
// closure must also write the analytic gradient there.
using LossWithGrad =
    std::function<double(std::span<const double> params, std::span<double> grad_out)>;

// Central-difference check of the closure's analytic gradient. Relative error
// per coordinate uses denominator max(|analytic|, |numeric|, 1e-8). Throws
// ProbeError (with the offending index) if a probe evaluates non-finite.
GradReport grad_check(const LossWithGrad& loss, std::span<const double> params, double step);

}  // namespace rmlab
