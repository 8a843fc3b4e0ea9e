#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rmlab/numarray.hpp"

namespace rmlab {

// Verifies the information-theoretic claims behind the architecture
// comparison on linear-Gaussian reward families, where the Fisher matrices
// and estimators have closed forms and everything else is brute force.
//
// Model: response y is a vector in R^dim; task k predicts r_k(y; theta) =
// (D_k y)^T theta with shared parameters. The holistic task s is a weighted
// sum of the attribute maps when `correlated_design` is set. Labels carry
// gaussian noise with per-task variances.

enum class DesignKind { gaussian, ones };

struct LinearFamily {
    std::size_t dim = 6;
    std::vector<NumArray> attr_maps;  // K matrices, each dim x dim
    NumArray holistic_map;            // dim x dim
    NumArray theta_star;              // dim
    std::vector<double> attr_noise;   // variances sigma_kk
    double holistic_noise = 1.0;      // variance sigma_ss
    std::vector<double> task_weights; // w_k with phi_s = sum w_k phi_k
    bool correlated_design = true;
    // Scale of a holistic map component outside the attribute span; the
    // holistic task keeps positively correlated gradients with the
    // attributes but is not fully determined by them.
    double holistic_extra_scale = 0.35;
    DesignKind base_design = DesignKind::gaussian;

    std::size_t n_tasks() const { return attr_maps.size(); }
    void validate() const;

    // Base points y_1..y_n (n x dim).
    NumArray sample_design(std::size_t n, std::uint64_t seed) const;
    // Row i = phi(y_i)^T for the given map.
    NumArray task_design(const NumArray& base, const NumArray& map) const;

    static LinearFamily make_default(std::uint64_t seed, std::size_t dim = 6);
    // d=1, constant designs, unit weights/noise: the hand-checkable family.
    static LinearFamily make_scalar_constant(std::size_t n_attrs);
};

struct FisherSet {
    NumArray single;      // (1/sigma_ss) sum phi_s phi_s^T
    NumArray multi;       // sum_k (1/sigma_kk) sum phi_k phi_k^T
    NumArray par;         // single + multi
    NumArray par_direct;  // recomputed from the framework formula over all tasks
    double multi_min_eigenvalue = 0.0;
    bool strict = false;  // min eigenvalue of (par - single) > 0
};

// Total empirical information over an n-point design (no 1/n factor; the
// same convention on every framework, so orderings are unaffected).
FisherSet fisher(const LinearFamily& family, std::size_t n, std::uint64_t design_seed);

struct McConfig {
    std::size_t n = 60;             // training points per replicate
    std::size_t replicates = 200;
    std::size_t holdout = 400;      // evaluation points per replicate
    std::size_t pref_pairs = 1000;  // sampled pairs for the preference error
    // Default sequential: freeze the stage-1 attribute regression and refit
    // only the K-dim combiner on the holistic labels. The literal two-stage
    // variant instead fine-tunes all of theta on the holistic loss for a few
    // gradient steps from the stage-1 point.
    bool literal_two_stage = false;
    std::size_t literal_steps = 50;
    double literal_lr = 0.05;
};

struct FrameworkStats {
    double mse_mean = 0.0;
    double mse_stderr = 0.0;
    double pref_mean = 0.0;
    double pref_stderr = 0.0;
};

struct McResult {
    FrameworkStats single_stats, seq_stats, par_stats;
    // per-replicate win indicators
    std::vector<std::uint8_t> par_lt_single_mse, par_lt_seq_mse;
    std::vector<std::uint8_t> par_lt_single_pref, par_lt_seq_pref;
    std::size_t excluded_singular = 0;
    bool indistinguishable = false;  // all framework MSEs below resolution

    double win_rate(const std::vector<std::uint8_t>& wins) const {
        if (wins.empty()) return 0.0;
        double s = 0.0;
        for (auto w : wins) s += w;
        return s / static_cast<double>(wins.size());
    }
};

McResult mc_orderings(const LinearFamily& family, const McConfig& cfg, std::uint64_t seed);

// --- Lemma 1: pairwise preference error bound ---------------------------------

struct Quad {
    double r_a = 0.0, r_b = 0.0, g_a = 0.0, g_b = 0.0;
};

struct Lemma1Result {
    double max_violation = 0.0;  // max over samples of (lhs - bound); <= 0 when the bound holds
    double worst_slack = 0.0;    // min over samples of (bound - lhs)
    std::size_t count = 0;
};

// lhs   = |sigma(r_a - r_b) - sigma(g_a - g_b)|
// bound = (1/4) sqrt(2 ((r_a-g_a)^2 + (r_b-g_b)^2))   (per-sample form)
Lemma1Result lemma1_check(std::span<const Quad> samples);
std::vector<Quad> lemma1_gaussian_quads(std::size_t count, double score_spread, double error_scale,
                                        std::uint64_t seed);

// --- Lemma 2: MSE from parameter covariance -----------------------------------

struct Lemma2Result {
    double median_rel_gap = 0.0;     // over probe points, sigma00-free parts
    std::vector<double> probe_gaps;
    double predicted_mean = 0.0;     // mean over probes of grad^T Cov grad
    double empirical_mean = 0.0;     // mean over probes of (r_hat - g)^2
    std::size_t replicates_used = 0;
};

// Fits the holistic least-squares estimator over `replicates` independent
// draws; covariance comes from even-numbered replicates, the empirical
// squared error from odd-numbered ones, so the two sides are independent.
// Requires >= 30 usable replicates per side.
Lemma2Result lemma2_check(const LinearFamily& family, std::size_t n, std::size_t replicates,
                          std::size_t n_probes, std::uint64_t seed);

// --- verdicts -----------------------------------------------------------------

enum class Verdict { holds, holds_nonstrict, fails };
std::string verdict_name(Verdict v);

}  // namespace rmlab
