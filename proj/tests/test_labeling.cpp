#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rmlab/labeling.hpp"

using namespace rmlab;

namespace {

AnnotationBundle bundle_of(std::array<int, 5> help, std::array<int, 5> harm,
                           std::array<int, 5> option) {
    AnnotationBundle b;
    b.response_id = 0;
    for (std::size_t i = 0; i < 5; ++i) {
        b.rounds[i].help = help[i];
        b.rounds[i].harm = harm[i];
        b.rounds[i].option = option[i];
    }
    return b;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is.good());
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("majority_vote: unanimous rounds have zero variance") {
    const auto b = bundle_of({2, 2, 2, 2, 2}, {0, 0, 0, 0, 0}, {2, 2, 2, 2, 2});
    const VoteSummary v = majority_vote(b);
    CHECK(v.help_mode == 2);
    CHECK(v.var_help == 0.0);
    CHECK(v.harm_mode == 0);
    CHECK(v.var_harm == 0.0);
    CHECK(v.w_base == WeightVector{0.5, 0.5});
}

TEST_CASE("majority_vote: score tie breaks toward the round mean") {
    // [2,2,1,1,0]: tie {2,1}, mean 1.2 -> 1; population variance 0.56
    const auto b = bundle_of({2, 2, 1, 1, 0}, {0, 0, 0, 0, 0}, {0, 0, 0, 0, 0});
    const VoteSummary v = majority_vote(b);
    CHECK(v.help_mode == 1);
    CHECK(v.var_help == doctest::Approx(0.56).epsilon(1e-12));
}

TEST_CASE("majority_vote: option tie breaks toward the safer option") {
    const auto b = bundle_of({0, 0, 0, 0, 0}, {0, 0, 0, 0, 0}, {4, 4, 3, 3, 0});
    const VoteSummary v = majority_vote(b);
    CHECK(v.option_mode == 4);
    CHECK(v.w_base == WeightVector{0.0, 1.0});
}

TEST_CASE("majority_vote: invariant to round reordering") {
    const auto a = bundle_of({2, 1, 0, 1, -2}, {1, 1, -1, 0, 2}, {1, 2, 1, 3, 1});
    const auto b = bundle_of({-2, 1, 1, 0, 2}, {2, 0, -1, 1, 1}, {3, 1, 1, 2, 1});
    const VoteSummary va = majority_vote(a);
    const VoteSummary vb = majority_vote(b);
    CHECK(va.help_mode == vb.help_mode);
    CHECK(va.harm_mode == vb.harm_mode);
    CHECK(va.var_help == vb.var_help);
    CHECK(va.var_harm == vb.var_harm);
    CHECK(va.option_mode == vb.option_mode);
}

TEST_CASE("select_target: the four documented branch examples") {
    CHECK(select_target({0.7, 0.3}, 0.2, 0.6) == WeightVector{1.0, 0.0});
    CHECK(select_target({0.3, 0.7}, 0.5, 0.1) == WeightVector{0.0, 1.0});
    CHECK(select_target({0.5, 0.5}, 0.9, 0.0) == WeightVector{0.5, 0.5});
    CHECK(select_target({0.7, 0.3}, 0.6, 0.2) == WeightVector{0.5, 0.5});
}

TEST_CASE("select_target: exhaustive table over canonical bases and variance orderings") {
    const double lo = 0.1, hi = 0.4;
    struct Row {
        WeightVector base;
        double vh, vs;
        WeightVector expect;
    };
    const Row table[] = {
        // harm variance higher: trust the helpfulness-leaning bases fully
        {{1.0, 0.0}, lo, hi, {1.0, 0.0}},
        {{0.7, 0.3}, lo, hi, {1.0, 0.0}},
        {{0.5, 0.5}, lo, hi, {0.5, 0.5}},
        {{0.3, 0.7}, lo, hi, {0.5, 0.5}},
        {{0.0, 1.0}, lo, hi, {0.5, 0.5}},
        // help variance higher: trust the harm-leaning bases fully
        {{1.0, 0.0}, hi, lo, {0.5, 0.5}},
        {{0.7, 0.3}, hi, lo, {0.5, 0.5}},
        {{0.5, 0.5}, hi, lo, {0.5, 0.5}},
        {{0.3, 0.7}, hi, lo, {0.0, 1.0}},
        {{0.0, 1.0}, hi, lo, {0.0, 1.0}},
        // equal variances land in the retreat branches when weights differ
        {{1.0, 0.0}, lo, lo, {0.5, 0.5}},
        {{0.7, 0.3}, lo, lo, {0.5, 0.5}},
        {{0.5, 0.5}, lo, lo, {0.5, 0.5}},
        {{0.3, 0.7}, lo, lo, {0.5, 0.5}},
        {{0.0, 1.0}, lo, lo, {0.5, 0.5}},
    };
    for (const Row& row : table) {
        CAPTURE(row.base.w_help);
        CAPTURE(row.vh);
        CAPTURE(row.vs);
        CHECK(select_target(row.base, row.vh, row.vs) == row.expect);
    }
}

TEST_CASE("select_target: pure and idempotent") {
    for (int i = 0; i < static_cast<int>(kRegimeCount); ++i) {
        const WeightVector base = canonical_weight(i);
        const WeightVector t = select_target(base, 0.3, 0.7);
        CHECK(select_target(base, 0.3, 0.7) == t);
        // targets are themselves fixed points of the same variance pattern
        // when they coincide with a canonical option
        CHECK(canonical_index(t) >= 0);
    }
}

TEST_CASE("monotone trust: raising harm variance past help variance flips the target") {
    const WeightVector base{0.7, 0.3};
    const double vh = 0.3;
    CHECK(select_target(base, vh, 0.1) == WeightVector{0.5, 0.5});
    CHECK(select_target(base, vh, 0.2999) == WeightVector{0.5, 0.5});
    CHECK(select_target(base, vh, 0.3) == WeightVector{0.5, 0.5});  // tie stays in retreat
    CHECK(select_target(base, vh, 0.3001) == WeightVector{1.0, 0.0});
    CHECK(select_target(base, vh, 0.9) == WeightVector{1.0, 0.0});
}

TEST_CASE("adjust_weight: sigma_adj substitution and clipping") {
    AdjustParams params;  // sigma_min 0.05, sigma_max 0.5, gamma 0.1
    RngStream rng(1u);
    const WeightAdjustment adj = adjust_weight({0.7, 0.3}, 2.1, 0.1, params, rng);
    CHECK(adj.sigma_adj == doctest::Approx(0.25).epsilon(1e-12));

    RngStream rng2(2u);
    const WeightAdjustment tight = adjust_weight({0.7, 0.3}, 0.2, 0.2, params, rng2);
    CHECK(tight.sigma_adj == params.sigma_min);

    RngStream rng3(3u);
    const WeightAdjustment capped = adjust_weight({0.7, 0.3}, 9.0, 0.0, params, rng3);
    CHECK(capped.sigma_adj == params.sigma_max);

    AdjustParams bad;
    bad.sigma_min = 0.0;
    RngStream rng4(4u);
    CHECK_THROWS_AS(adjust_weight({0.7, 0.3}, 0.1, 0.1, bad, rng4), ConfigError);
}

TEST_CASE("interpolate_weight: endpoint and midpoint hooks") {
    const WeightVector base{0.7, 0.3}, target{1.0, 0.0};
    CHECK(interpolate_weight(base, target, 1.0) == WeightVector{1.0, 0.0});
    const WeightVector mid = interpolate_weight(base, target, 0.5);
    CHECK(mid.w_help == doctest::Approx(0.85).epsilon(1e-12));
    CHECK(mid.w_harm == doctest::Approx(0.15).epsilon(1e-12));
    CHECK(interpolate_weight(base, target, 0.0) == base);
}

TEST_CASE("adjust_weight: equal variances at the balanced base never move") {
    AdjustParams params;
    RngStream rng(5u);
    for (int i = 0; i < 100; ++i) {
        const WeightAdjustment adj = adjust_weight({0.5, 0.5}, 0.3, 0.3, params, rng);
        CHECK(adj.sigma_adj == params.sigma_min);
        CHECK(adj.w_final == WeightVector{0.5, 0.5});
    }
}

namespace {

// E[clip(|N(0, sigma^2)|, 0, 1)] by Simpson quadrature over the density plus
// the clipped tail mass.
double clipped_folded_mean(double sigma) {
    const std::size_t n = 20000;  // even
    const double h = 1.0 / static_cast<double>(n);
    auto f = [&](double x) {
        return x * 2.0 / (sigma * std::sqrt(2.0 * M_PI)) *
               std::exp(-x * x / (2.0 * sigma * sigma));
    };
    double acc = f(0.0) + f(1.0);
    for (std::size_t i = 1; i < n; ++i) acc += f(i * h) * (i % 2 ? 4.0 : 2.0);
    const double body = acc * h / 3.0;
    const double tail = std::erfc(1.0 / (sigma * std::sqrt(2.0)));  // P(|X| > 1)
    return body + tail;
}

}  // namespace

TEST_CASE("adjust_weight: alpha mean over 1e6 draws matches the quadrature oracle") {
    AdjustParams params;  // variance gap 2.0 -> sigma_adj = 0.25
    RngStream rng(4242u);
    const std::size_t draws = 1000000;
    double mean_alpha = 0.0;
    double sigma_seen = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
        const WeightAdjustment adj = adjust_weight({0.7, 0.3}, 2.1, 0.1, params, rng);
        mean_alpha += adj.alpha_step;
        sigma_seen = adj.sigma_adj;
    }
    mean_alpha /= static_cast<double>(draws);
    REQUIRE(sigma_seen == doctest::Approx(0.25).epsilon(1e-12));
    const double expect = clipped_folded_mean(0.25);
    CHECK(std::fabs(mean_alpha - expect) < 0.002);
}

TEST_CASE("aggregate_corpus: unanimous balanced bundles keep their base weight") {
    WorldConfig cfg;
    cfg.n_contexts = 25;
    cfg.integer_scores = true;
    cfg.regime_mix = {0.0, 0.0, 1.0, 0.0, 0.0};
    const World world = gen_world(cfg, 2u);
    RaterNoise quiet;
    quiet.score_noise = 0.0;
    quiet.option_flip_prob = 0.0;
    const auto bundles = annotate_world(world, quiet, 3u);
    const auto labels = aggregate_corpus(bundles, world, AdjustParams{}, 4u);
    for (const AggregatedLabel& l : labels) {
        CHECK(l.w_final == WeightVector{0.5, 0.5});
        CHECK(l.s_w == doctest::Approx(0.5 * l.help + 0.5 * l.harm).epsilon(1e-12));
    }
}

TEST_CASE("aggregate_corpus: deterministic label files for a fixed seed") {
    WorldConfig cfg;
    cfg.n_contexts = 40;
    const World world = gen_world(cfg, 6u);
    const auto bundles = annotate_world(world, RaterNoise{}, 7u);
    const auto la = aggregate_corpus(bundles, world, AdjustParams{}, 8u);
    const auto lb = aggregate_corpus(bundles, world, AdjustParams{}, 8u);
    const auto dir = std::filesystem::temp_directory_path() / "rmlab_test_labels";
    std::filesystem::create_directories(dir);
    write_labels_jsonl((dir / "a.jsonl").string(), la);
    write_labels_jsonl((dir / "b.jsonl").string(), lb);
    CHECK(slurp((dir / "a.jsonl").string()) == slurp((dir / "b.jsonl").string()));
}

TEST_CASE("aggregate_corpus: dangling response ids are rejected") {
    WorldConfig cfg;
    cfg.n_contexts = 5;
    const World world = gen_world(cfg, 9u);
    auto bundles = annotate_world(world, RaterNoise{}, 10u);
    bundles.front().response_id = 999999;
    CHECK_THROWS_AS(aggregate_corpus(bundles, world, AdjustParams{}, 11u), DataError);
}

TEST_CASE("aggregate_corpus: every label sits on its interpolation segment") {
    WorldConfig cfg;
    cfg.n_contexts = 300;
    const World world = gen_world(cfg, 12u);
    const auto bundles = annotate_world(world, RaterNoise{}, 13u);
    const auto labels = aggregate_corpus(bundles, world, AdjustParams{}, 14u);
    for (const AggregatedLabel& l : labels) {
        CHECK(l.alpha >= 0.0);
        CHECK(l.alpha <= 1.0);
        const WeightVector recon = interpolate_weight(l.w_base, l.w_target, l.alpha);
        CHECK(std::fabs(recon.w_help - l.w_final.w_help) <= 1e-15);
        CHECK(std::fabs(recon.w_harm - l.w_final.w_harm) <= 1e-15);
        CHECK(l.w_final.w_help >= 0.0);
        CHECK(l.w_final.w_help <= 1.0);
        CHECK(l.w_final.w_harm >= 0.0);
        CHECK(l.w_final.w_harm <= 1.0);
        CHECK(std::fabs(l.w_final.w_help + l.w_final.w_harm - 1.0) <= 1e-12);
    }
}

TEST_CASE("aggregate_corpus: final weights spread off the five discrete bases") {
    WorldConfig cfg;
    cfg.n_contexts = 2000;
    cfg.responses_per_context = 2;
    const World world = gen_world(cfg, 7u);
    const auto bundles = annotate_world(world, RaterNoise{}, 7u);
    const auto labels = aggregate_corpus(bundles, world, AdjustParams{}, 7u);
    std::size_t at_base = 0;
    for (const AggregatedLabel& l : labels)
        if (canonical_index(l.w_final, 1e-12) >= 0 &&
            std::fabs(l.w_final.w_help - l.w_base.w_help) <= 1e-12)
            ++at_base;
    const double frac = static_cast<double>(at_base) / static_cast<double>(labels.size());
    CHECK(frac < 0.60);
}

TEST_CASE("signed-step variant maps negative draws to the base weight") {
    AdjustParams params;
    params.signed_step = true;
    std::size_t zero_alpha = 0;
    RngStream rng(77u);
    for (int i = 0; i < 2000; ++i) {
        const WeightAdjustment adj = adjust_weight({0.7, 0.3}, 0.8, 0.1, params, rng);
        CHECK(adj.alpha_step >= 0.0);
        if (adj.alpha_step == 0.0) {
            ++zero_alpha;
            CHECK(adj.w_final == WeightVector{0.7, 0.3});
        }
    }
    // about half of the signed draws are negative and clip to zero
    CHECK(zero_alpha > 800);
    CHECK(zero_alpha < 1200);
}
