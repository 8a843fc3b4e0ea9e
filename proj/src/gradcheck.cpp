#include "rmlab/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace rmlab {

GradReport grad_check(const LossWithGrad& loss, std::span<const double> params, double step) {
    if (!(step > 0.0)) throw ConfigError("grad_check: step must be positive");
    const std::size_t n = params.size();

    std::vector<double> analytic(n, 0.0);
    const double base = loss(params, analytic);
    if (!std::isfinite(base)) throw ProbeError("grad_check: loss not finite at params", 0);

    std::vector<double> probe(params.begin(), params.end());
    std::vector<double> numeric(n, 0.0);
    std::span<double> no_grad{};
    for (std::size_t i = 0; i < n; ++i) {
        const double saved = probe[i];
        probe[i] = saved + step;
        const double up = loss(probe, no_grad);
        probe[i] = saved - step;
        const double down = loss(probe, no_grad);
        probe[i] = saved;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw ProbeError("grad_check: non-finite loss while probing index " +
                                 std::to_string(i),
                             i);
        numeric[i] = (up - down) / (2.0 * step);
    }

    double max_rel = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric[i]), 1e-8});
        max_rel = std::max(max_rel, std::fabs(analytic[i] - numeric[i]) / denom);
    }

    GradReport report;
    report.analytic = NumArray::vec(std::move(analytic));
    report.numeric = NumArray::vec(std::move(numeric));
    report.max_rel_error = max_rel;
    return report;
}

}  // namespace rmlab
