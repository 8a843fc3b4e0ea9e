#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rmlab/linalg.hpp"
#include "rmlab/synthworld.hpp"

using namespace rmlab;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is.good());
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::string temp_dir(const std::string& tag) {
    const std::string dir =
        (std::filesystem::temp_directory_path() / ("rmlab_test_" + tag)).string();
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Expected |clamp(round(s + noise)) - s| under gaussian noise, by direct
// integration over the five clamped-rounding cells.
double clamp_round_mae(double s, double sigma) {
    double mae = 0.0;
    for (int j = -2; j <= 2; ++j) {
        double p;
        if (j == -2)
            p = norm_cdf((-1.5 - s) / sigma);
        else if (j == 2)
            p = 1.0 - norm_cdf((1.5 - s) / sigma);
        else
            p = norm_cdf((j + 0.5 - s) / sigma) - norm_cdf((j - 0.5 - s) / sigma);
        mae += std::fabs(j - s) * p;
    }
    return mae;
}

}  // namespace

TEST_CASE("gen_world: zero noise reproduces the generative identity") {
    WorldConfig cfg;
    cfg.n_contexts = 40;
    cfg.feature_noise = 0.0;
    const World world = gen_world(cfg, 3u);
    for (const SynthResponse& r : world.responses) {
        const Regime regime = world.context_by_id(r.context_id).regime;
        const double w_help = canonical_weight(regime).w_help;
        for (std::size_t i = 0; i < cfg.response_dim; ++i) {
            const double expect = world.mixing.at(i, 0) * r.s_help +
                                  world.mixing.at(i, 1) * r.s_harm +
                                  world.mixing.at(i, 2) * w_help;
            CHECK(r.feature[i] == expect);
        }
    }
}

TEST_CASE("gen_world: identical config and seed give byte-identical dumps") {
    WorldConfig cfg;
    cfg.n_contexts = 60;
    const World a = gen_world(cfg, 11u);
    const World b = gen_world(cfg, 11u);
    const std::string da = temp_dir("world_a"), db = temp_dir("world_b");
    write_world_dir(da, a, nullptr);
    write_world_dir(db, b, nullptr);
    for (const char* f : {"/contexts.jsonl", "/responses.jsonl", "/world_meta.json"})
        CHECK(slurp(da + f) == slurp(db + f));
}

TEST_CASE("gen_world: regime frequencies track the mixture within 3 points") {
    WorldConfig cfg;
    cfg.n_contexts = 10000;
    cfg.responses_per_context = 2;
    cfg.regime_mix = {0.3, 0.1, 0.2, 0.15, 0.25};
    const World world = gen_world(cfg, 7u);
    std::array<double, kRegimeCount> freq{};
    for (const auto& ctx : world.contexts) freq[static_cast<std::size_t>(ctx.regime)] += 1.0;
    for (std::size_t r = 0; r < kRegimeCount; ++r) {
        freq[r] /= static_cast<double>(cfg.n_contexts);
        CHECK(std::fabs(freq[r] - cfg.regime_mix[r]) < 0.03);
    }
}

TEST_CASE("gen_world: score marginals cover the full range") {
    WorldConfig cfg;
    cfg.n_contexts = 500;
    const World world = gen_world(cfg, 13u);
    double lo = 2.0, hi = -2.0;
    for (const auto& r : world.responses) {
        lo = std::min({lo, r.s_help, r.s_harm});
        hi = std::max({hi, r.s_help, r.s_harm});
    }
    CHECK(lo < -1.8);
    CHECK(hi > 1.8);
    CHECK(lo >= -2.0);
    CHECK(hi <= 2.0);
}

TEST_CASE("gen_world: invalid configs are rejected") {
    WorldConfig cfg;
    cfg.regime_mix = {0.5, 0.5, 0.5, 0.0, 0.0};
    CHECK_THROWS_AS(gen_world(cfg, 1u), ConfigError);
    WorldConfig cfg2;
    cfg2.responses_per_context = 1;
    CHECK_THROWS_AS(gen_world(cfg2, 1u), ConfigError);
    WorldConfig cfg3;
    cfg3.n_contexts = 0;
    CHECK_THROWS_AS(gen_world(cfg3, 1u), ConfigError);
}

TEST_CASE("simulate_annotations: zero noise and zero flips copy the truth") {
    WorldConfig cfg;
    cfg.n_contexts = 20;
    cfg.integer_scores = true;
    const World world = gen_world(cfg, 5u);
    RaterNoise noise;
    noise.score_noise = 0.0;
    noise.option_flip_prob = 0.0;
    const auto bundles = annotate_world(world, noise, 9u);
    REQUIRE(bundles.size() == world.responses.size());
    for (std::size_t i = 0; i < bundles.size(); ++i) {
        const SynthResponse& r = world.responses[i];
        const int canonical = static_cast<int>(world.context_by_id(r.context_id).regime);
        for (const AnnotationRound& round : bundles[i].rounds) {
            CHECK(round.help == static_cast<int>(r.s_help));
            CHECK(round.harm == static_cast<int>(r.s_harm));
            CHECK(round.option == canonical);
        }
    }
}

TEST_CASE("simulate_annotations: forced flips never keep the canonical option") {
    WorldConfig cfg;
    cfg.n_contexts = 50;
    const World world = gen_world(cfg, 15u);
    RaterNoise noise;
    noise.option_flip_prob = 1.0;
    const auto bundles = annotate_world(world, noise, 21u);
    for (std::size_t i = 0; i < bundles.size(); ++i) {
        const int canonical = static_cast<int>(
            world.context_by_id(world.responses[i].context_id).regime);
        for (const AnnotationRound& round : bundles[i].rounds) {
            CHECK(round.option != canonical);
            CHECK(std::abs(round.option - canonical) == 1);
        }
    }
}

TEST_CASE("simulate_annotations: empirical MAE matches the integration oracle") {
    WorldConfig cfg;
    cfg.n_contexts = 5000;
    cfg.responses_per_context = 4;  // 20k responses -> 100k rounds
    const World world = gen_world(cfg, 33u);
    RaterNoise noise;
    noise.score_noise = 0.7;
    const auto bundles = annotate_world(world, noise, 44u);

    double empirical = 0.0, expected = 0.0;
    std::size_t rounds = 0;
    for (std::size_t i = 0; i < bundles.size(); ++i) {
        const double s = world.responses[i].s_help;
        expected += kRoundsPerResponse * clamp_round_mae(s, noise.score_noise);
        for (const AnnotationRound& round : bundles[i].rounds) {
            empirical += std::fabs(round.help - s);
            ++rounds;
        }
    }
    REQUIRE(rounds == 100000);
    empirical /= static_cast<double>(rounds);
    expected /= static_cast<double>(rounds);
    CHECK(std::fabs(empirical - expected) < 0.05);
}

TEST_CASE("score recoverability: least squares on a noiseless world is exact") {
    WorldConfig cfg;
    cfg.n_contexts = 400;
    cfg.feature_noise = 0.0;
    const World world = gen_world(cfg, 17u);
    const std::size_t n = world.responses.size();
    NumArray x({n, cfg.response_dim});
    std::vector<double> y_help(n), y_harm(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto f = world.responses[i].feature.values();
        std::copy(f.begin(), f.end(), x.row(i).begin());
        y_help[i] = world.responses[i].s_help;
        y_harm[i] = world.responses[i].s_harm;
    }
    for (const auto* y : {&y_help, &y_harm}) {
        const std::vector<double> beta = lstsq(x, *y);
        double rss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = dot(x.row(i), beta) - (*y)[i];
            rss += e * e;
        }
        CHECK(std::sqrt(rss) < 1e-8);
    }
}

TEST_CASE("bundle invariants: five rounds, everything in documented ranges") {
    WorldConfig cfg;
    cfg.n_contexts = 100;
    const World world = gen_world(cfg, 23u);
    RaterNoise noise;
    noise.score_noise = 2.5;  // wild raters still clamp into range
    noise.option_flip_prob = 0.5;
    const auto bundles = annotate_world(world, noise, 3u);
    for (const auto& b : bundles) {
        CHECK(b.rounds.size() == kRoundsPerResponse);
        for (const auto& r : b.rounds) {
            CHECK(r.help >= -2);
            CHECK(r.help <= 2);
            CHECK(r.harm >= -2);
            CHECK(r.harm <= 2);
            CHECK(r.option >= 0);
            CHECK(r.option < static_cast<int>(kRegimeCount));
        }
    }
}

TEST_CASE("world dump round trip preserves everything bit-exactly") {
    WorldConfig cfg;
    cfg.n_contexts = 30;
    const World world = gen_world(cfg, 77u);
    RaterNoise noise;
    const auto bundles = annotate_world(world, noise, 78u);
    const std::string dir = temp_dir("roundtrip");
    write_world_dir(dir, world, &bundles);

    std::vector<AnnotationBundle> bundles_back;
    const World back = read_world_dir(dir, &bundles_back);
    REQUIRE(back.responses.size() == world.responses.size());
    REQUIRE(bundles_back.size() == bundles.size());
    for (std::size_t i = 0; i < world.responses.size(); ++i) {
        CHECK(back.responses[i].id == world.responses[i].id);
        CHECK(back.responses[i].s_help == world.responses[i].s_help);
        CHECK(back.responses[i].s_harm == world.responses[i].s_harm);
        for (std::size_t j = 0; j < cfg.response_dim; ++j)
            CHECK(back.responses[i].feature[j] == world.responses[i].feature[j]);
    }
    for (std::size_t i = 0; i < bundles.size(); ++i)
        for (std::size_t r = 0; r < kRoundsPerResponse; ++r) {
            CHECK(bundles_back[i].rounds[r].help == bundles[i].rounds[r].help);
            CHECK(bundles_back[i].rounds[r].option == bundles[i].rounds[r].option);
        }
}
