#pragma once

#include <array>
#include <cmath>
#include <cstddef>

#include "rmlab/common.hpp"

namespace rmlab {

// Helpfulness/harmlessness trade-off weights. Components are non-negative
// and sum to 1.
struct WeightVector {
    double w_help = 0.5;
    double w_harm = 0.5;

    bool valid(double tol = 1e-12) const {
        return w_help >= 0.0 && w_harm >= 0.0 && std::fabs(w_help + w_harm - 1.0) <= tol;
    }
    friend bool operator==(const WeightVector& a, const WeightVector& b) {
        return a.w_help == b.w_help && a.w_harm == b.w_harm;
    }
};

// The five query regimes and their canonical base weights, ordered from
// helpfulness-focused to harmlessness-focused. Index == option index in
// annotation rounds; a larger index means a larger harmlessness weight.
enum class Regime : int {
    help_only = 0,
    help_lean = 1,
    balanced = 2,
    harm_lean = 3,
    harm_only = 4,
};

inline constexpr std::size_t kRegimeCount = 5;

inline constexpr std::array<WeightVector, kRegimeCount> kCanonicalWeights{{
    {1.0, 0.0},
    {0.7, 0.3},
    {0.5, 0.5},
    {0.3, 0.7},
    {0.0, 1.0},
}};

inline WeightVector canonical_weight(int option_index) {
    if (option_index < 0 || option_index >= static_cast<int>(kRegimeCount))
        throw ConfigError("weight option index out of range: " + std::to_string(option_index));
    return kCanonicalWeights[static_cast<std::size_t>(option_index)];
}

inline WeightVector canonical_weight(Regime r) { return canonical_weight(static_cast<int>(r)); }

// Index of a canonical weight vector, or -1 if not canonical.
inline int canonical_index(const WeightVector& w, double tol = 1e-9) {
    for (std::size_t i = 0; i < kRegimeCount; ++i)
        if (std::fabs(kCanonicalWeights[i].w_help - w.w_help) <= tol &&
            std::fabs(kCanonicalWeights[i].w_harm - w.w_harm) <= tol)
            return static_cast<int>(i);
    return -1;
}

}  // namespace rmlab
