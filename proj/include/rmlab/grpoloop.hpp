#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rmlab/mlp.hpp"
#include "rmlab/rewardlab.hpp"
#include "rmlab/synthworld.hpp"

namespace rmlab {

// Toy group-relative policy optimization: a categorical policy over a fixed
// candidate set per context, optimized against the trained reward model's
// weighted score with a clipped-ratio surrogate and a KL penalty to the
// frozen starting policy.

struct CandidateSet {
    SynthContext context;
    std::vector<SynthResponse> candidates;
};

std::vector<CandidateSet> make_candidate_sets(const World& world);

struct Policy {
    Mlp scorer;     // (context feature ++ response feature) -> logit
    Mlp reference;  // frozen snapshot of the starting scorer

    static Policy init(std::size_t context_dim, std::size_t response_dim,
                       const std::vector<std::size_t>& hidden, std::uint64_t seed);

    double logit(const SynthContext& ctx, const SynthResponse& resp) const;
    // softmax over the candidate logits; sums to 1 within 1e-12
    std::vector<double> action_probs(const CandidateSet& set) const;
    std::vector<double> reference_action_probs(const CandidateSet& set) const;
};

// a_i = (r_i - mean) / (population std + epsilon); all exactly 0 when the
// rewards have zero variance.
std::vector<double> group_advantage(std::span<const double> rewards, double epsilon);

struct GrpoConfig {
    std::size_t group_size = 32;
    double clip_eps = 0.2;
    double kl_coef = 0.01;
    double lr = 0.05;
    double advantage_epsilon = 1e-8;

    void validate() const;
};

struct StepDiagnostics {
    double mean_reward = 0.0;   // sampled
    double kl_estimate = 0.0;   // sampled-action estimator, >= 0 pointwise
    double clip_fraction = 0.0;
};

// One optimization step: samples group_size responses per context from the
// current policy (the behavior policy for this step), z-scores the rewards
// within each group, and applies the clipped importance-ratio surrogate plus
// kl_coef * KL(current || reference) estimated on the sampled actions.
// Throws Error naming the context if logits go non-finite.
StepDiagnostics grpo_step(Policy& policy, const RewardNet& reward,
                          std::span<const CandidateSet> batch, const GrpoConfig& cfg,
                          RngStream& rng);

// Exact expectations over the finite candidate sets (no sampling noise).
double mean_policy_reward(const Policy& policy, const RewardNet& reward,
                          std::span<const CandidateSet> contexts);
double exact_kl_to_reference(const Policy& policy, std::span<const CandidateSet> contexts);

struct GrpoRunConfig {
    GrpoConfig step;
    std::size_t epochs = 2;
    std::size_t batch_contexts = 16;
};

struct GrpoRunResult {
    std::vector<StepDiagnostics> steps;
    double start_mean_reward = 0.0;
    double end_mean_reward = 0.0;
    double final_exact_kl = 0.0;
};

GrpoRunResult grpo_train(Policy& policy, const RewardNet& reward,
                         std::span<const CandidateSet> contexts, const GrpoRunConfig& cfg,
                         std::uint64_t seed);

// --- arbitration evaluation ---------------------------------------------------

// Evaluation context carrying one helpful-dominant (s_help=2, s_harm=-2) and
// one safe-dominant (s_help=-2, s_harm=2) candidate.
struct ArbEval {
    SynthContext context;
    SynthResponse help_dom;
    SynthResponse safe_dom;
};

// n contexts cycling through the five regimes, features built with the
// world's mixing matrix and noise scales.
std::vector<ArbEval> make_arbitration_set(const World& world, std::size_t n, std::uint64_t seed);

struct ArbRates {
    std::array<double, kRegimeCount> rate{};
    std::array<std::size_t, kRegimeCount> count{};

    double extreme_min() const {
        return std::min(rate[0], rate[kRegimeCount - 1]);
    }
};

// Appropriate choice: helpful-dominant for regimes [1,0] and [0.7,0.3],
// safe-dominant for [0.3,0.7] and [0,1]; either counts for [0.5,0.5].
ArbRates arbitration_rates(std::span<const ArbEval> evals,
                           const std::function<bool(const ArbEval&)>& picks_help);
ArbRates arbitration_metric(const Policy& policy, std::span<const ArbEval> evals);

void write_grpo_diagnostics_jsonl(const std::string& path,
                                  const std::vector<StepDiagnostics>& steps,
                                  const ArbRates* final_rates);

}  // namespace rmlab
