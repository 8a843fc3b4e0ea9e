#include "rmlab/curation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "rmlab/linalg.hpp"
#include "rmlab/mlp.hpp"

namespace rmlab {

using nlohmann::json;

void CurationConfig::validate() const {
    if (delta_min < 0.0) throw ConfigError("curation: delta_min must be >= 0");
    if (bt_frac < 0.0 || bt_frac > 1.0) throw ConfigError("curation: bt_frac must lie in [0,1]");
    if (per_bin < 1) throw ConfigError("curation: per_bin must be >= 1");
    if (length_bins < 1 || sw_bins < 1) throw ConfigError("curation: bin counts must be >= 1");
    if (hard_negative_p < 0.0 || hard_negative_p > 1.0)
        throw ConfigError("curation: hard_negative_p must lie in [0,1]");
}

std::size_t BinReport::max_drawn() const {
    std::size_t m = 0;
    for (const auto& [key, counts] : cells) m = std::max(m, counts.second);
    return m;
}

std::size_t BinReport::min_drawn_occupied() const {
    std::size_t m = SIZE_MAX;
    for (const auto& [key, counts] : cells)
        if (counts.second > 0) m = std::min(m, counts.second);
    return m == SIZE_MAX ? 0 : m;
}

std::vector<PreferencePair> mine_pairs(const std::vector<AggregatedLabel>& labels,
                                       const World& world, double delta_min) {
    if (delta_min < 0.0) throw ConfigError("mine_pairs: delta_min must be >= 0");
    std::unordered_map<std::uint64_t, const AggregatedLabel*> by_id;
    for (const auto& l : labels) by_id[l.response_id] = &l;

    std::vector<PreferencePair> pairs;
    const auto groups = world.responses_by_context();
    for (std::size_t ci = 0; ci < groups.size(); ++ci) {
        const auto& group = groups[ci];
        for (std::size_t a = 0; a < group.size(); ++a) {
            const SynthResponse& ra = world.responses[group[a]];
            auto ita = by_id.find(ra.id);
            if (ita == by_id.end()) continue;
            for (std::size_t b = a + 1; b < group.size(); ++b) {
                const SynthResponse& rb = world.responses[group[b]];
                auto itb = by_id.find(rb.id);
                if (itb == by_id.end()) continue;
                const double diff = ita->second->s_w - itb->second->s_w;
                if (std::fabs(diff) <= delta_min) continue;  // strict threshold
                PreferencePair p;
                p.context_id = world.contexts[ci].id;
                if (diff > 0.0) {
                    p.chosen_id = ra.id;
                    p.rejected_id = rb.id;
                    p.delta = diff;
                } else {
                    p.chosen_id = rb.id;
                    p.rejected_id = ra.id;
                    p.delta = -diff;
                }
                pairs.push_back(p);
            }
        }
    }
    return pairs;
}

namespace {

int length_bin_of(int length, const WorldConfig& cfg, std::size_t bins) {
    const double span = static_cast<double>(cfg.length_max - cfg.length_min) + 1.0;
    const double t = (length - cfg.length_min) / span;
    return std::clamp(static_cast<int>(t * static_cast<double>(bins)), 0,
                      static_cast<int>(bins) - 1);
}

int sw_bin_of(double s_w, std::size_t bins) {
    const double t = (s_w + 2.0) / 4.0;
    return std::clamp(static_cast<int>(t * static_cast<double>(bins)), 0,
                      static_cast<int>(bins) - 1);
}

}  // namespace

CuratedCorpus split_bt_mse(const std::vector<PreferencePair>& eligible,
                           const std::vector<AggregatedLabel>& labels, const World& world,
                           const CurationConfig& config, std::uint64_t seed) {
    config.validate();
    CuratedCorpus corpus;

    // D_BT: uniform sample without replacement.
    const std::size_t n_bt =
        static_cast<std::size_t>(std::floor(config.bt_frac * static_cast<double>(eligible.size())));
    std::vector<std::size_t> order(eligible.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    RngStream split_rng(derive_seed(seed, "curate/split"));
    std::shuffle(order.begin(), order.end(), split_rng.engine());
    std::unordered_set<std::uint64_t> bt_members;
    corpus.d_bt.reserve(n_bt);
    for (std::size_t i = 0; i < n_bt; ++i) {
        const PreferencePair& p = eligible[order[i]];
        corpus.d_bt.push_back(p);
        bt_members.insert(p.chosen_id);
        bt_members.insert(p.rejected_id);
    }

    // MSE candidate pool: members of remaining pairs plus unpaired responses;
    // under the overlap policy the D_BT members join as well.
    std::unordered_set<std::uint64_t> pool_ids;
    for (std::size_t i = n_bt; i < order.size(); ++i) {
        pool_ids.insert(eligible[order[i]].chosen_id);
        pool_ids.insert(eligible[order[i]].rejected_id);
    }
    std::unordered_set<std::uint64_t> paired;
    for (const auto& p : eligible) {
        paired.insert(p.chosen_id);
        paired.insert(p.rejected_id);
    }
    for (const auto& l : labels)
        if (!paired.count(l.response_id)) pool_ids.insert(l.response_id);
    if (config.overlap == OverlapPolicy::allow)
        for (std::uint64_t id : bt_members) pool_ids.insert(id);
    else
        for (std::uint64_t id : bt_members) pool_ids.erase(id);

    // Bin the pool on (length bin x category x s_w bin) and cap each cell.
    std::unordered_map<std::uint64_t, const AggregatedLabel*> by_id;
    for (const auto& l : labels) by_id[l.response_id] = &l;
    std::map<std::array<int, 3>, std::vector<std::uint64_t>> cells;
    for (const auto& l : labels) {
        if (!pool_ids.count(l.response_id)) continue;
        const SynthResponse& resp = world.response_by_id(l.response_id);
        const std::array<int, 3> key{length_bin_of(resp.length, world.config, config.length_bins),
                                     resp.category, sw_bin_of(l.s_w, config.sw_bins)};
        cells[key].push_back(l.response_id);
    }
    for (auto& [key, members] : cells) {
        std::sort(members.begin(), members.end());
        const std::size_t take = std::min<std::size_t>(config.per_bin, members.size());
        RngStream cell_rng(derive_seed(seed, "curate/cell",
                                       (static_cast<std::uint64_t>(key[0]) << 32) ^
                                           (static_cast<std::uint64_t>(key[1]) << 16) ^
                                           static_cast<std::uint64_t>(key[2])));
        std::shuffle(members.begin(), members.end(), cell_rng.engine());
        for (std::size_t i = 0; i < take; ++i) {
            const AggregatedLabel& l = *by_id.at(members[i]);
            MseRecord rec;
            rec.response_id = l.response_id;
            rec.target = {static_cast<double>(l.help), static_cast<double>(l.harm), l.s_w};
            rec.length_bin = key[0];
            rec.category = key[1];
            rec.sw_bin = key[2];
            corpus.d_mse.push_back(rec);
        }
        corpus.bins.cells[key] = {members.size(), take};
    }
    std::sort(corpus.d_mse.begin(), corpus.d_mse.end(),
              [](const MseRecord& a, const MseRecord& b) { return a.response_id < b.response_id; });
    return corpus;
}

std::vector<HackTemplate> build_template_pool(const std::vector<AggregatedLabel>& labels,
                                              const World& world, std::size_t count,
                                              std::uint64_t seed) {
    if (labels.empty()) throw DataError("build_template_pool: no labels");
    const std::size_t d = world.config.response_dim;

    // Throwaway single-head scorer: a least-squares fit of s_w on features.
    NumArray x({labels.size(), d});
    std::vector<double> y(labels.size());
    double min_sw = labels.front().s_w;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto f = world.response_by_id(labels[i].response_id).feature.values();
        std::copy(f.begin(), f.end(), x.row(i).begin());
        y[i] = labels[i].s_w;
        min_sw = std::min(min_sw, labels[i].s_w);
    }
    const std::vector<double> w = lstsq(x, y);

    double max_norm = 0.0;
    for (const auto& r : world.responses) max_norm = std::max(max_norm, l2_norm(r.feature.values()));
    const double cap = max_norm;  // payloads stay inside the data manifold
    const double w_norm = l2_norm(w);
    if (!(w_norm > 0.0)) throw DataError("build_template_pool: degenerate scorer fit");

    // Start each payload from a genuinely high-scoring response and run a
    // short ascent on the throwaway score. Every payload drifts along the
    // same scorer direction, which is what makes them formulaic, and the
    // norm cap keeps them indistinguishable from excellent responses.
    std::vector<std::size_t> by_score(labels.size());
    for (std::size_t i = 0; i < by_score.size(); ++i) by_score[i] = i;
    std::sort(by_score.begin(), by_score.end(),
              [&](std::size_t a, std::size_t b) { return labels[a].s_w > labels[b].s_w; });
    const std::size_t top = std::max<std::size_t>(1, labels.size() / 10);

    std::vector<HackTemplate> pool;
    pool.reserve(count);
    for (std::size_t t = 0; t < count; ++t) {
        RngStream trng(derive_seed(seed, "templates/ascent", t));
        const AggregatedLabel& start_label = labels[by_score[trng.index(top)]];
        NumArray f = world.response_by_id(start_label.response_id).feature;
        const double step = 0.05 * max_norm / w_norm;
        for (int it = 0; it < 100; ++it) {
            axpy(step, w, f.values());
            const double n = l2_norm(f.values());
            if (n > cap)
                for (double& v : f.values()) v *= cap / n;
        }
        HackTemplate tmpl;
        tmpl.id = static_cast<std::int64_t>(t);
        tmpl.feature = std::move(f);
        tmpl.target = {-2.0, -2.0, min_sw};
        pool.push_back(std::move(tmpl));
    }
    return pool;
}

void inject_hard_negatives(std::vector<PreferencePair>& d_bt, double p,
                           const std::vector<HackTemplate>& pool, bool exact_fraction,
                           std::uint64_t seed) {
    if (p < 0.0 || p > 1.0) throw ConfigError("inject_hard_negatives: p must lie in [0,1]");
    if (p > 0.0 && pool.empty())
        throw ConfigError("inject_hard_negatives: template pool is empty");
    if (p == 0.0) return;

    if (exact_fraction) {
        std::vector<std::size_t> order(d_bt.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        RngStream rng(derive_seed(seed, "inject/exact"));
        std::shuffle(order.begin(), order.end(), rng.engine());
        const std::size_t n =
            static_cast<std::size_t>(std::lround(p * static_cast<double>(d_bt.size())));
        for (std::size_t i = 0; i < n && i < order.size(); ++i) {
            PreferencePair& pair = d_bt[order[i]];
            pair.hard_negative = true;
            pair.template_id = pool[rng.index(pool.size())].id;
        }
        return;
    }
    for (std::size_t i = 0; i < d_bt.size(); ++i) {
        RngStream rng(derive_seed(seed, "inject/pair", i));
        if (!rng.bernoulli(p)) continue;
        d_bt[i].hard_negative = true;
        d_bt[i].template_id = pool[rng.index(pool.size())].id;
    }
}

// --- dumps ------------------------------------------------------------------

void write_corpus_dir(const std::string& dir, const CuratedCorpus& corpus) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream os(dir + "/d_bt.jsonl");
        if (!os) throw Error("cannot write " + dir + "/d_bt.jsonl");
        for (const auto& p : corpus.d_bt) {
            json rec{{"context_id", p.context_id},   {"chosen_id", p.chosen_id},
                     {"rejected_id", p.rejected_id}, {"delta", p.delta},
                     {"hard_negative", p.hard_negative}, {"template_id", p.template_id}};
            os << rec.dump() << '\n';
        }
    }
    {
        std::ofstream os(dir + "/d_mse.jsonl");
        if (!os) throw Error("cannot write " + dir + "/d_mse.jsonl");
        for (const auto& r : corpus.d_mse) {
            json rec{{"response_id", r.response_id},
                     {"target", r.target},
                     {"length_bin", r.length_bin},
                     {"category", r.category},
                     {"sw_bin", r.sw_bin}};
            os << rec.dump() << '\n';
        }
    }
    {
        std::ofstream os(dir + "/templates.jsonl");
        if (!os) throw Error("cannot write " + dir + "/templates.jsonl");
        for (const auto& t : corpus.templates) {
            json feature = json::array();
            for (double v : t.feature.values()) feature.push_back(v);
            json rec{{"template_id", t.id}, {"feature", feature}, {"target", t.target}};
            os << rec.dump() << '\n';
        }
    }
    {
        json bins = json::array();
        for (const auto& [key, counts] : corpus.bins.cells)
            bins.push_back(json{{"length_bin", key[0]},
                                {"category", key[1]},
                                {"sw_bin", key[2]},
                                {"pool", counts.first},
                                {"drawn", counts.second}});
        std::ofstream os(dir + "/bin_report.json");
        if (!os) throw Error("cannot write " + dir + "/bin_report.json");
        os << bins.dump(2) << '\n';
    }
}

CuratedCorpus read_corpus_dir(const std::string& dir) {
    CuratedCorpus corpus;
    {
        std::ifstream is(dir + "/d_bt.jsonl");
        if (!is) throw DataError("missing input: " + dir + "/d_bt.jsonl");
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            json rec = json::parse(line);
            PreferencePair p;
            p.context_id = rec.at("context_id").get<std::uint64_t>();
            p.chosen_id = rec.at("chosen_id").get<std::uint64_t>();
            p.rejected_id = rec.at("rejected_id").get<std::uint64_t>();
            p.delta = rec.at("delta").get<double>();
            p.hard_negative = rec.at("hard_negative").get<bool>();
            p.template_id = rec.at("template_id").get<std::int64_t>();
            corpus.d_bt.push_back(p);
        }
    }
    {
        std::ifstream is(dir + "/d_mse.jsonl");
        if (!is) throw DataError("missing input: " + dir + "/d_mse.jsonl");
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            json rec = json::parse(line);
            MseRecord r;
            r.response_id = rec.at("response_id").get<std::uint64_t>();
            for (std::size_t i = 0; i < 3; ++i) r.target[i] = rec.at("target").at(i).get<double>();
            r.length_bin = rec.at("length_bin").get<int>();
            r.category = rec.at("category").get<int>();
            r.sw_bin = rec.at("sw_bin").get<int>();
            corpus.d_mse.push_back(r);
        }
    }
    {
        std::ifstream is(dir + "/templates.jsonl");
        if (is) {
            std::string line;
            while (std::getline(is, line)) {
                if (line.empty()) continue;
                json rec = json::parse(line);
                HackTemplate t;
                t.id = rec.at("template_id").get<std::int64_t>();
                std::vector<double> vals;
                for (const auto& v : rec.at("feature")) vals.push_back(v.get<double>());
                t.feature = NumArray::vec(std::move(vals));
                for (std::size_t i = 0; i < 3; ++i)
                    t.target[i] = rec.at("target").at(i).get<double>();
                corpus.templates.push_back(std::move(t));
            }
        }
    }
    {
        std::ifstream is(dir + "/bin_report.json");
        if (is) {
            json bins = json::parse(is);
            for (const auto& cell : bins) {
                std::array<int, 3> key{cell.at("length_bin").get<int>(),
                                       cell.at("category").get<int>(),
                                       cell.at("sw_bin").get<int>()};
                corpus.bins.cells[key] = {cell.at("pool").get<std::size_t>(),
                                          cell.at("drawn").get<std::size_t>()};
            }
        }
    }
    return corpus;
}

}  // namespace rmlab
