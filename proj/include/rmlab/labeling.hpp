#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rmlab/synthworld.hpp"
#include "rmlab/weights.hpp"

namespace rmlab {

// Aggregates five rater rounds into final labels: modal scores, base weight,
// a variance-selected target weight and the stochastically interpolated
// final weight, plus the weighted supervision target s_w.

struct VoteSummary {
    int help_mode = 0;
    int harm_mode = 0;
    double var_help = 0.0;  // population variance over the 5 raw help scores
    double var_harm = 0.0;
    int option_mode = 0;
    WeightVector w_base;
};

// Modal scores and option with deterministic tie-breaks:
//   score ties -> value closest to the round mean, then smaller |value|,
//   then the smaller value; option ties -> the safer option (higher w_harm).
VoteSummary majority_vote(const AnnotationBundle& bundle);

// Target-weight selection: when the dimension the base weight favors has the
// lower score variance the target becomes decisive ([1,0] or [0,1]); when it
// has the higher variance the target retreats to [0.5,0.5]; equal base
// weights keep the base. Variance ties land in the retreat branches.
WeightVector select_target(const WeightVector& w_base, double var_help, double var_harm);

struct AdjustParams {
    double sigma_min = 0.05;
    double sigma_max = 0.5;
    double gamma_var = 0.1;
    // Canonical step is clip(|N(0, sigma_adj^2)|, 0, 1); the variant clips the
    // signed draw directly (mapping negative draws to 0).
    bool signed_step = false;

    void validate() const;
};

struct WeightAdjustment {
    WeightVector w_target;
    double sigma_adj = 0.0;
    double alpha_step = 0.0;
    WeightVector w_final;
};

// sigma_adj = clip(sigma_min + gamma_var*|var_h - var_s|, sigma_min, sigma_max)
// alpha     = clip(|N(0, sigma_adj^2)|, 0, 1)
// W_final   = W_base + alpha * (W_target - W_base)
WeightAdjustment adjust_weight(const WeightVector& w_base, double var_help, double var_harm,
                               const AdjustParams& params, RngStream& rng);

// Deterministic interpolation core (the alpha test hook).
WeightVector interpolate_weight(const WeightVector& base, const WeightVector& target,
                                double alpha);

struct AggregatedLabel {
    std::uint64_t response_id = 0;
    int help = 0;
    int harm = 0;
    double var_help = 0.0;
    double var_harm = 0.0;
    WeightVector w_base;
    WeightVector w_target;
    double sigma_adj = 0.0;
    double alpha = 0.0;
    WeightVector w_final;
    double s_w = 0.0;  // w_final . [help, harm]
};

// One label per bundle; the rng stream for each response is derived from
// (seed, response id) so sharding does not change results. Throws DataError
// on ids missing from `world`.
std::vector<AggregatedLabel> aggregate_corpus(const std::vector<AnnotationBundle>& bundles,
                                              const World& world, const AdjustParams& params,
                                              std::uint64_t seed);

// Label dump, one JSON record per line with fields (response_id, help, harm,
// var_h, var_s, w_base, w_target, sigma_adj, alpha, w_final, s_w).
void write_labels_jsonl(const std::string& path, const std::vector<AggregatedLabel>& labels);
std::vector<AggregatedLabel> read_labels_jsonl(const std::string& path);

}  // namespace rmlab
