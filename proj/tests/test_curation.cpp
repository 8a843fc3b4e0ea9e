#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "rmlab/curation.hpp"

using namespace rmlab;

namespace {

// One context, n responses, with s_w values handed in directly.
struct TinyWorld {
    World world;
    std::vector<AggregatedLabel> labels;
};

TinyWorld tiny_world(const std::vector<double>& s_w_values) {
    WorldConfig cfg;
    cfg.n_contexts = 1;
    cfg.responses_per_context = std::max<std::size_t>(2, s_w_values.size());
    TinyWorld t;
    t.world = gen_world(cfg, 1u);
    for (std::size_t i = 0; i < s_w_values.size(); ++i) {
        AggregatedLabel l;
        l.response_id = t.world.responses[i].id;
        l.help = 0;
        l.harm = 0;
        l.w_base = {0.5, 0.5};
        l.w_target = {0.5, 0.5};
        l.w_final = {0.5, 0.5};
        l.s_w = s_w_values[i];
        t.labels.push_back(l);
    }
    return t;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is.good());
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::string temp_dir(const std::string& tag) {
    const std::string dir =
        (std::filesystem::temp_directory_path() / ("rmlab_cur_" + tag)).string();
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// world + labels for a larger pipeline exercise
struct LabeledWorld {
    World world;
    std::vector<AggregatedLabel> labels;
};

LabeledWorld default_labeled_world(std::uint64_t seed, std::size_t n_contexts = 600) {
    LabeledWorld lw;
    WorldConfig cfg;
    cfg.n_contexts = n_contexts;
    lw.world = gen_world(cfg, seed);
    const auto bundles = annotate_world(lw.world, RaterNoise{}, derive_seed(seed, "t/ann"));
    lw.labels = aggregate_corpus(bundles, lw.world, AdjustParams{}, derive_seed(seed, "t/lab"));
    return lw;
}

}  // namespace

TEST_CASE("mine_pairs: strict threshold, orientation, and singletons") {
    const TinyWorld t = tiny_world({2.0, -2.0});
    const auto pairs = mine_pairs(t.labels, t.world, 3.6);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].chosen_id == t.labels[0].response_id);
    CHECK(pairs[0].rejected_id == t.labels[1].response_id);
    CHECK(pairs[0].delta == doctest::Approx(4.0));

    // a difference of exactly 3.6 does not qualify
    const TinyWorld border = tiny_world({1.8, -1.8});
    CHECK(mine_pairs(border.labels, border.world, 3.6).empty());

    // single labeled response in the context: nothing to pair
    const TinyWorld lone = tiny_world({2.0});
    CHECK(mine_pairs(lone.labels, lone.world, 3.6).empty());
}

TEST_CASE("mine_pairs: never crosses context boundaries") {
    WorldConfig cfg;
    cfg.n_contexts = 2;
    cfg.responses_per_context = 2;
    const World world = gen_world(cfg, 3u);
    std::vector<AggregatedLabel> labels;
    for (std::size_t i = 0; i < world.responses.size(); ++i) {
        AggregatedLabel l;
        l.response_id = world.responses[i].id;
        l.s_w = (i % 2 == 0) ? 2.0 : -2.0;
        labels.push_back(l);
    }
    const auto pairs = mine_pairs(labels, world, 3.6);
    CHECK(pairs.size() == 2);  // one per context, none across
    for (const auto& p : pairs)
        CHECK(world.response_by_id(p.chosen_id).context_id ==
              world.response_by_id(p.rejected_id).context_id);
}

TEST_CASE("split_bt_mse: floor arithmetic on the preference share") {
    // 100 contexts, one high/low pair each -> exactly 100 eligible pairs
    WorldConfig cfg;
    cfg.n_contexts = 100;
    cfg.responses_per_context = 2;
    const World world = gen_world(cfg, 5u);
    std::vector<AggregatedLabel> labels;
    for (std::size_t i = 0; i < world.responses.size(); ++i) {
        AggregatedLabel l;
        l.response_id = world.responses[i].id;
        l.help = (i % 2 == 0) ? 2 : -2;
        l.harm = (i % 2 == 0) ? 2 : -2;
        l.w_final = {0.5, 0.5};
        l.s_w = (i % 2 == 0) ? 2.0 : -2.0;
        labels.push_back(l);
    }
    const auto eligible = mine_pairs(labels, world, 3.6);
    REQUIRE(eligible.size() == 100);

    CurationConfig cc;
    cc.bt_frac = 0.85;
    const CuratedCorpus corpus = split_bt_mse(eligible, labels, world, cc, 9u);
    CHECK(corpus.d_bt.size() == 85);

    CurationConfig none;
    none.bt_frac = 0.0;
    const CuratedCorpus all_mse = split_bt_mse(eligible, labels, world, none, 9u);
    CHECK(all_mse.d_bt.empty());
    CHECK(!all_mse.d_mse.empty());
}

TEST_CASE("split_bt_mse: invalid fractions are rejected") {
    CurationConfig cc;
    cc.bt_frac = 1.5;
    CHECK_THROWS_AS(cc.validate(), ConfigError);
    cc.bt_frac = -0.1;
    CHECK_THROWS_AS(cc.validate(), ConfigError);
}

TEST_CASE("split_bt_mse: cell caps hold and occupied cells balance") {
    const LabeledWorld lw = default_labeled_world(7u);
    const CurationConfig cc;  // defaults
    const auto eligible = mine_pairs(lw.labels, lw.world, cc.delta_min);
    REQUIRE(eligible.size() > 50);
    const CuratedCorpus corpus = split_bt_mse(eligible, lw.labels, lw.world, cc, 7u);

    REQUIRE(!corpus.d_mse.empty());
    CHECK(corpus.bins.max_drawn() <= cc.per_bin);
    for (const auto& [key, counts] : corpus.bins.cells) {
        // cells with enough population draw exactly per_bin
        if (counts.first >= cc.per_bin) CHECK(counts.second == cc.per_bin);
        CHECK(counts.second <= counts.first);
    }
    const double ratio = static_cast<double>(corpus.bins.max_drawn()) /
                         static_cast<double>(corpus.bins.min_drawn_occupied());
    CHECK(ratio <= 1.0 + 1.0 / static_cast<double>(cc.per_bin));
}

TEST_CASE("inject_hard_negatives: p=0 and p=1 endpoints") {
    const LabeledWorld lw = default_labeled_world(11u, 200);
    const CurationConfig cc;
    const auto eligible = mine_pairs(lw.labels, lw.world, cc.delta_min);
    CuratedCorpus corpus = split_bt_mse(eligible, lw.labels, lw.world, cc, 11u);
    const auto pool = build_template_pool(lw.labels, lw.world, 8, 12u);

    auto zero = corpus.d_bt;
    inject_hard_negatives(zero, 0.0, pool, false, 13u);
    for (const auto& p : zero) CHECK(!p.hard_negative);

    auto one = corpus.d_bt;
    inject_hard_negatives(one, 1.0, pool, false, 13u);
    for (const auto& p : one) {
        CHECK(p.hard_negative);
        CHECK(p.template_id >= 0);
        CHECK(p.template_id < static_cast<std::int64_t>(pool.size()));
    }

    std::vector<PreferencePair> some = corpus.d_bt;
    CHECK_THROWS_AS(inject_hard_negatives(some, 0.5, {}, false, 13u), ConfigError);
}

TEST_CASE("inject_hard_negatives: flagged count near the binomial expectation") {
    std::vector<PreferencePair> pairs(10000);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        pairs[i].chosen_id = 2 * i;
        pairs[i].rejected_id = 2 * i + 1;
        pairs[i].delta = 4.0;
    }
    std::vector<HackTemplate> pool(4);
    for (std::size_t i = 0; i < pool.size(); ++i) {
        pool[i].id = static_cast<std::int64_t>(i);
        pool[i].feature = NumArray({8});
    }
    inject_hard_negatives(pairs, 0.10, pool, false, 99u);
    std::size_t flagged = 0;
    for (const auto& p : pairs)
        if (p.hard_negative) ++flagged;
    const double expect = 1000.0;
    const double sigma = std::sqrt(10000.0 * 0.1 * 0.9);
    CHECK(std::fabs(static_cast<double>(flagged) - expect) <= 3.0 * sigma);
}

TEST_CASE("inject_hard_negatives: exact-fraction mode flags round(p*n) pairs") {
    std::vector<PreferencePair> pairs(1000);
    std::vector<HackTemplate> pool(2);
    pool[0].feature = NumArray({4});
    pool[1].id = 1;
    pool[1].feature = NumArray({4});
    inject_hard_negatives(pairs, 0.1, pool, true, 5u);
    std::size_t flagged = 0;
    for (const auto& p : pairs)
        if (p.hard_negative) ++flagged;
    CHECK(flagged == 100);
}

TEST_CASE("templates: bounded features aimed at a naive scorer, bottom-rank targets") {
    const LabeledWorld lw = default_labeled_world(21u, 150);
    const auto pool = build_template_pool(lw.labels, lw.world, 6, 22u);
    REQUIRE(pool.size() == 6);

    double max_norm = 0.0;
    for (const auto& r : lw.world.responses)
        max_norm = std::max(max_norm, l2_norm(r.feature.values()));
    double min_sw = lw.labels.front().s_w;
    for (const auto& l : lw.labels) min_sw = std::min(min_sw, l.s_w);

    for (const auto& t : pool) {
        CHECK(t.feature.all_finite());
        CHECK(l2_norm(t.feature.values()) <= 1.5 * max_norm + 1e-9);
        CHECK(t.target[0] == -2.0);
        CHECK(t.target[1] == -2.0);
        CHECK(t.target[2] == min_sw);
    }
}

TEST_CASE("curation invariants: deltas, chosen side, determinism") {
    const LabeledWorld lw = default_labeled_world(31u, 400);
    const CurationConfig cc;
    const auto eligible = mine_pairs(lw.labels, lw.world, cc.delta_min);
    CuratedCorpus a = split_bt_mse(eligible, lw.labels, lw.world, cc, 31u);
    a.templates = build_template_pool(lw.labels, lw.world, cc.template_pool, 32u);
    inject_hard_negatives(a.d_bt, cc.hard_negative_p, a.templates, false, 33u);

    std::unordered_set<std::uint64_t> world_ids;
    for (const auto& r : lw.world.responses) world_ids.insert(r.id);
    for (const auto& p : a.d_bt) {
        CHECK(p.delta > cc.delta_min);  // recorded before substitution
        CHECK(world_ids.count(p.chosen_id) == 1);  // templates never chosen
        if (!p.hard_negative) CHECK(p.template_id == -1);
    }

    CuratedCorpus b = split_bt_mse(eligible, lw.labels, lw.world, cc, 31u);
    b.templates = build_template_pool(lw.labels, lw.world, cc.template_pool, 32u);
    inject_hard_negatives(b.d_bt, cc.hard_negative_p, b.templates, false, 33u);

    const std::string da = temp_dir("a"), db = temp_dir("b");
    write_corpus_dir(da, a);
    write_corpus_dir(db, b);
    for (const char* f :
         {"/d_bt.jsonl", "/d_mse.jsonl", "/templates.jsonl", "/bin_report.json"})
        CHECK(slurp(da + f) == slurp(db + f));
}

TEST_CASE("overlap policy: exclude keeps preference members out of the pool") {
    const LabeledWorld lw = default_labeled_world(41u, 300);
    CurationConfig cc;
    cc.overlap = OverlapPolicy::exclude;
    const auto eligible = mine_pairs(lw.labels, lw.world, cc.delta_min);
    const CuratedCorpus corpus = split_bt_mse(eligible, lw.labels, lw.world, cc, 41u);
    std::unordered_set<std::uint64_t> bt_ids;
    for (const auto& p : corpus.d_bt) {
        bt_ids.insert(p.chosen_id);
        bt_ids.insert(p.rejected_id);
    }
    for (const auto& r : corpus.d_mse) CHECK(bt_ids.count(r.response_id) == 0);
}

TEST_CASE("corpus dump round trip") {
    const LabeledWorld lw = default_labeled_world(51u, 100);
    const CurationConfig cc;
    const auto eligible = mine_pairs(lw.labels, lw.world, cc.delta_min);
    CuratedCorpus corpus = split_bt_mse(eligible, lw.labels, lw.world, cc, 51u);
    corpus.templates = build_template_pool(lw.labels, lw.world, 4, 52u);
    inject_hard_negatives(corpus.d_bt, 0.5, corpus.templates, false, 53u);

    const std::string dir = temp_dir("rt");
    write_corpus_dir(dir, corpus);
    const CuratedCorpus back = read_corpus_dir(dir);
    REQUIRE(back.d_bt.size() == corpus.d_bt.size());
    REQUIRE(back.d_mse.size() == corpus.d_mse.size());
    REQUIRE(back.templates.size() == corpus.templates.size());
    for (std::size_t i = 0; i < corpus.d_bt.size(); ++i) {
        CHECK(back.d_bt[i].chosen_id == corpus.d_bt[i].chosen_id);
        CHECK(back.d_bt[i].hard_negative == corpus.d_bt[i].hard_negative);
        CHECK(back.d_bt[i].template_id == corpus.d_bt[i].template_id);
        CHECK(back.d_bt[i].delta == corpus.d_bt[i].delta);
    }
    for (std::size_t i = 0; i < corpus.templates.size(); ++i)
        for (std::size_t j = 0; j < corpus.templates[i].feature.size(); ++j)
            CHECK(back.templates[i].feature[j] == corpus.templates[i].feature[j]);
}
