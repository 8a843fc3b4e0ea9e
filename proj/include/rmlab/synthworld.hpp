#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rmlab/numarray.hpp"
#include "rmlab/weights.hpp"

namespace rmlab {

// Synthetic stand-in for an annotated multimodal preference corpus: contexts
// (query + regime), candidate responses with known ground-truth scores, and
// simulated noisy rater rounds. Ground truth is exact by construction, so
// everything downstream can be checked against it.

struct WorldConfig {
    std::size_t n_contexts = 400;
    std::size_t responses_per_context = 4;  // >= 2
    std::size_t context_dim = 8;            // d_c, >= 5 (regime one-hot prefix)
    std::size_t response_dim = 16;          // d_r, >= 3
    double feature_noise = 1.25;            // isotropic eta std on response features
    // Structured noise on the expressed score latents: the embedding claims
    // slightly wrong helpfulness/harmlessness (eta component A*[zh, zs, 0]).
    // The context-weight latent stays cleanly expressed.
    double latent_score_noise = 0.0;
    // Shared high-variance noise directions inside eta (stylistic variation
    // common to many responses); they dominate the feature covariance and
    // are uninformative about quality.
    std::size_t n_style = 6;
    double style_scale = 0.0;
    double context_noise = 0.1;
    double regime_signal = 1.0;             // scale of the regime one-hot in context features
    // Safety-focused contexts dominate, mirroring how preference corpora
    // concentrate on risk-bearing queries.
    std::array<double, kRegimeCount> regime_mix{0.05, 0.05, 0.15, 0.25, 0.50};
    bool integer_scores = false;            // true scores on the -2..2 integer grid
    // Polarization of the score marginals: 1 is uniform on [-2,2]; larger
    // values push mass toward clearly-good / clearly-bad responses (density
    // proportional to |s|^(score_extremity - 1)).
    double score_extremity = 8.0;
    // Harmlessness scores cluster positive (most responses are benign) with
    // a harmful tail of this mass; 0 keeps the symmetric marginal.
    double harm_tail_frac = 0.0;
    // Separate polarization for the harmlessness marginal; 0 follows
    // score_extremity. Helpfulness tends to be strongly bimodal (answers
    // either address the request or do not) while harm severity grades more
    // smoothly, so the two spreads are configured independently.
    double harm_extremity = 1.0;
    std::size_t n_categories = 4;
    int length_min = 20;
    int length_max = 400;
    // When set, length and category are tied to the scores so curation's
    // de-biasing has a real skew to remove.
    bool correlated_attrs = false;
    // Seeds the world structure (the mixing matrix A): worlds that share a
    // config share feature semantics, while the gen_world seed varies the
    // samples. Train and held-out worlds rely on this.
    std::uint64_t structure_seed = 2718281828ULL;

    void validate() const;
};

struct SynthContext {
    std::uint64_t id = 0;
    Regime regime = Regime::balanced;
    NumArray feature;  // dim d_c
};

struct SynthResponse {
    std::uint64_t id = 0;
    std::uint64_t context_id = 0;
    double s_help = 0.0;  // in [-2, 2]
    double s_harm = 0.0;  // in [-2, 2]
    int length = 0;
    int category = 0;
    NumArray feature;  // dim d_r; A * [s_help, s_harm, w_help] + eta
};

struct World {
    WorldConfig config;
    NumArray mixing;  // A, (d_r x 3)
    std::vector<SynthContext> contexts;
    std::vector<SynthResponse> responses;

    const SynthContext& context_by_id(std::uint64_t id) const;
    const SynthResponse& response_by_id(std::uint64_t id) const;
    std::vector<std::vector<std::size_t>> responses_by_context() const;
};

World gen_world(const WorldConfig& config, std::uint64_t seed);

// Noiseless response feature for given scores and base weight under a world's
// mixing matrix; the generative identity tests and template construction use
// this directly.
NumArray response_feature(const NumArray& mixing, double s_help, double s_harm, double w_help);

struct RaterNoise {
    double score_noise = 0.5;       // gaussian std added before clamp(round(.))
    double option_flip_prob = 0.1;  // probability a round moves to an adjacent option

    void validate() const;
};

struct AnnotationRound {
    int help = 0;    // -2..2
    int harm = 0;    // -2..2
    int option = 0;  // 0..4
};

inline constexpr std::size_t kRoundsPerResponse = 5;

struct AnnotationBundle {
    std::uint64_t response_id = 0;
    std::array<AnnotationRound, kRoundsPerResponse> rounds{};
};

// One rater round: score = clamp(round(true + noise), -2, 2); option is the
// regime's canonical index, moved to an adjacent option with the configured
// probability.
AnnotationBundle simulate_annotations(const SynthResponse& response, const SynthContext& context,
                                      const RaterNoise& noise, RngStream& rng);

// Bundles for every response, each from a stream derived off (seed, id).
std::vector<AnnotationBundle> annotate_world(const World& world, const RaterNoise& noise,
                                             std::uint64_t seed);

// --- dataset dumps --------------------------------------------------------
//
// Line-delimited JSON under a directory:
//   contexts.jsonl   (context_id, regime, feature[])
//   responses.jsonl  (response_id, context_id, regime, s_help, s_harm,
//                     length, category, feature[], rounds[])
//   world_meta.json  (config + mixing matrix)
// Field names are part of the contract. rounds[] is empty until annotation.

void write_world_dir(const std::string& dir, const World& world,
                     const std::vector<AnnotationBundle>* bundles);
World read_world_dir(const std::string& dir, std::vector<AnnotationBundle>* bundles_out);

}  // namespace rmlab
