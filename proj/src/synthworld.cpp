#include "rmlab/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

namespace rmlab {

using nlohmann::json;

void WorldConfig::validate() const {
    if (n_contexts == 0) throw ConfigError("world: n_contexts must be positive");
    if (responses_per_context < 2)
        throw ConfigError("world: responses_per_context must be at least 2");
    if (context_dim < kRegimeCount)
        throw ConfigError("world: context_dim must be at least 5 to encode the regime");
    if (response_dim < 3) throw ConfigError("world: response_dim must be at least 3");
    if (feature_noise < 0.0 || context_noise < 0.0 || style_scale < 0.0 ||
        latent_score_noise < 0.0)
        throw ConfigError("world: noise scales must be non-negative");
    if (n_categories == 0) throw ConfigError("world: n_categories must be positive");
    if (length_min <= 0 || length_max < length_min)
        throw ConfigError("world: invalid length range");
    if (score_extremity < 1.0)
        throw ConfigError("world: score_extremity must be >= 1");
    if (harm_tail_frac < 0.0 || harm_tail_frac >= 1.0)
        throw ConfigError("world: harm_tail_frac must lie in [0,1)");
    if (harm_extremity < 0.0 || (harm_extremity > 0.0 && harm_extremity < 1.0))
        throw ConfigError("world: harm_extremity must be 0 or >= 1");
    double mix = 0.0;
    for (double p : regime_mix) {
        if (p < 0.0) throw ConfigError("world: regime mixture entries must be non-negative");
        mix += p;
    }
    if (std::fabs(mix - 1.0) > 1e-9) throw ConfigError("world: regime mixture must sum to 1");
}

void RaterNoise::validate() const {
    if (score_noise < 0.0) throw ConfigError("rater: score_noise must be non-negative");
    if (option_flip_prob < 0.0 || option_flip_prob > 1.0)
        throw ConfigError("rater: option_flip_prob must lie in [0,1]");
}

const SynthContext& World::context_by_id(std::uint64_t id) const {
    for (const auto& c : contexts)
        if (c.id == id) return c;
    throw DataError("unknown context id: " + std::to_string(id));
}

const SynthResponse& World::response_by_id(std::uint64_t id) const {
    // ids are dense and ordered in generated worlds
    if (id < responses.size() && responses[id].id == id) return responses[id];
    for (const auto& r : responses)
        if (r.id == id) return r;
    throw DataError("unknown response id: " + std::to_string(id));
}

std::vector<std::vector<std::size_t>> World::responses_by_context() const {
    std::unordered_map<std::uint64_t, std::size_t> ctx_index;
    for (std::size_t i = 0; i < contexts.size(); ++i) ctx_index[contexts[i].id] = i;
    std::vector<std::vector<std::size_t>> groups(contexts.size());
    for (std::size_t i = 0; i < responses.size(); ++i) {
        auto it = ctx_index.find(responses[i].context_id);
        if (it == ctx_index.end())
            throw DataError("response references unknown context " +
                            std::to_string(responses[i].context_id));
        groups[it->second].push_back(i);
    }
    return groups;
}

NumArray response_feature(const NumArray& mixing, double s_help, double s_harm, double w_help) {
    const std::size_t d = mixing.shape()[0];
    NumArray f({d});
    for (std::size_t i = 0; i < d; ++i)
        f[i] = mixing.at(i, 0) * s_help + mixing.at(i, 1) * s_harm + mixing.at(i, 2) * w_help;
    return f;
}

namespace {

Regime sample_regime(const std::array<double, kRegimeCount>& mix, RngStream& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < kRegimeCount; ++i) {
        acc += mix[i];
        if (u < acc) return static_cast<Regime>(i);
    }
    return Regime::harm_only;
}

double shaped_score(double extremity, RngStream& rng) {
    const double u = rng.uniform(-1.0, 1.0);
    if (extremity == 1.0) return 2.0 * u;
    const double mag = std::pow(std::fabs(u), 1.0 / extremity);
    return 2.0 * (u < 0.0 ? -mag : mag);
}

double sample_score(const WorldConfig& cfg, RngStream& rng) {
    if (cfg.integer_scores) return static_cast<double>(rng.uniform_int(-2, 2));
    return shaped_score(cfg.score_extremity, rng);
}

double sample_harm_score(const WorldConfig& cfg, RngStream& rng) {
    if (cfg.integer_scores) return static_cast<double>(rng.uniform_int(-2, 2));
    if (cfg.harm_tail_frac > 0.0) {
        // benign bulk with a harmful tail; still covers the full range
        if (rng.bernoulli(cfg.harm_tail_frac)) return rng.uniform(-2.0, 0.5);
        return rng.uniform(0.5, 2.0);
    }
    const double ext = cfg.harm_extremity > 0.0 ? cfg.harm_extremity : cfg.score_extremity;
    return shaped_score(ext, rng);
}

}  // namespace

World gen_world(const WorldConfig& config, std::uint64_t seed) {
    config.validate();
    World world;
    world.config = config;

    RngStream mix_rng(derive_seed(config.structure_seed, "world/mixing"));
    world.mixing = NumArray({config.response_dim, 3});
    for (double& v : world.mixing.values()) v = mix_rng.gaussian();
    NumArray style({config.n_style, config.response_dim});
    if (config.style_scale > 0.0 && config.n_style > 0) {
        RngStream style_rng(derive_seed(config.structure_seed, "world/style"));
        for (std::size_t r = 0; r < config.n_style; ++r) {
            for (std::size_t j = 0; j < config.response_dim; ++j)
                style.at(r, j) = style_rng.gaussian();
            const double norm = l2_norm(style.row(r));
            if (norm > 0.0)
                for (std::size_t j = 0; j < config.response_dim; ++j) style.at(r, j) /= norm;
        }
    }

    world.contexts.reserve(config.n_contexts);
    world.responses.reserve(config.n_contexts * config.responses_per_context);
    std::uint64_t response_id = 0;
    for (std::uint64_t ci = 0; ci < config.n_contexts; ++ci) {
        RngStream rng(derive_seed(seed, "world/context", ci));
        SynthContext ctx;
        ctx.id = ci;
        ctx.regime = sample_regime(config.regime_mix, rng);
        ctx.feature = NumArray({config.context_dim});
        for (std::size_t j = 0; j < config.context_dim; ++j)
            ctx.feature[j] = config.context_noise * rng.gaussian();
        ctx.feature[static_cast<std::size_t>(ctx.regime)] += config.regime_signal;
        const double w_help = canonical_weight(ctx.regime).w_help;

        for (std::size_t rj = 0; rj < config.responses_per_context; ++rj) {
            SynthResponse resp;
            resp.id = response_id++;
            resp.context_id = ctx.id;
            resp.s_help = sample_score(config, rng);
            resp.s_harm = sample_harm_score(config, rng);
            if (config.correlated_attrs) {
                // longer answers for more helpful ones; category tracks the
                // harm band
                const double t = (resp.s_help + 2.0) / 4.0;
                resp.length = config.length_min +
                              static_cast<int>(t * (config.length_max - config.length_min));
                resp.category = static_cast<int>(
                    std::min<double>(config.n_categories - 1,
                                     (resp.s_harm + 2.0) / 4.0 * config.n_categories));
            } else {
                resp.length = static_cast<int>(rng.uniform_int(config.length_min,
                                                               config.length_max));
                resp.category = static_cast<int>(rng.index(config.n_categories));
            }
            double expressed_help = resp.s_help;
            double expressed_harm = resp.s_harm;
            if (config.latent_score_noise > 0.0) {
                expressed_help += config.latent_score_noise * rng.gaussian();
                expressed_harm += config.latent_score_noise * rng.gaussian();
            }
            resp.feature = response_feature(world.mixing, expressed_help, expressed_harm, w_help);
            for (double& v : resp.feature.values()) v += config.feature_noise * rng.gaussian();
            if (config.style_scale > 0.0)
                for (std::size_t sr = 0; sr < config.n_style; ++sr)
                    axpy(config.style_scale * rng.gaussian(), style.row(sr),
                         resp.feature.values());
            world.responses.push_back(std::move(resp));
        }
        world.contexts.push_back(std::move(ctx));
    }
    return world;
}

AnnotationBundle simulate_annotations(const SynthResponse& response, const SynthContext& context,
                                      const RaterNoise& noise, RngStream& rng) {
    noise.validate();
    AnnotationBundle bundle;
    bundle.response_id = response.id;
    const int canonical = static_cast<int>(context.regime);
    for (auto& round : bundle.rounds) {
        const double h = response.s_help + noise.score_noise * rng.gaussian();
        const double s = response.s_harm + noise.score_noise * rng.gaussian();
        round.help = static_cast<int>(std::clamp(std::lround(h), -2L, 2L));
        round.harm = static_cast<int>(std::clamp(std::lround(s), -2L, 2L));
        round.option = canonical;
        if (rng.bernoulli(noise.option_flip_prob)) {
            // move to an adjacent option on the 5-step ladder
            if (canonical == 0)
                round.option = 1;
            else if (canonical == static_cast<int>(kRegimeCount) - 1)
                round.option = canonical - 1;
            else
                round.option = canonical + (rng.bernoulli(0.5) ? 1 : -1);
        }
    }
    return bundle;
}

std::vector<AnnotationBundle> annotate_world(const World& world, const RaterNoise& noise,
                                             std::uint64_t seed) {
    noise.validate();
    std::vector<AnnotationBundle> bundles;
    bundles.reserve(world.responses.size());
    for (const SynthResponse& resp : world.responses) {
        RngStream rng(derive_seed(seed, "annotate/response", resp.id));
        bundles.push_back(
            simulate_annotations(resp, world.context_by_id(resp.context_id), noise, rng));
    }
    return bundles;
}

// --- dumps ------------------------------------------------------------------

namespace {

json feature_json(const NumArray& f) {
    json arr = json::array();
    for (double v : f.values()) arr.push_back(v);
    return arr;
}

NumArray feature_from_json(const json& arr) {
    std::vector<double> vals;
    vals.reserve(arr.size());
    for (const auto& v : arr) vals.push_back(v.get<double>());
    return NumArray::vec(std::move(vals));
}

json config_json(const WorldConfig& c) {
    return json{{"n_contexts", c.n_contexts},
                {"responses_per_context", c.responses_per_context},
                {"context_dim", c.context_dim},
                {"response_dim", c.response_dim},
                {"feature_noise", c.feature_noise},
                {"latent_score_noise", c.latent_score_noise},
                {"n_style", c.n_style},
                {"style_scale", c.style_scale},
                {"context_noise", c.context_noise},
                {"regime_signal", c.regime_signal},
                {"regime_mix", c.regime_mix},
                {"integer_scores", c.integer_scores},
                {"score_extremity", c.score_extremity},
                {"harm_tail_frac", c.harm_tail_frac},
                {"harm_extremity", c.harm_extremity},
                {"n_categories", c.n_categories},
                {"length_min", c.length_min},
                {"length_max", c.length_max},
                {"correlated_attrs", c.correlated_attrs},
                {"structure_seed", c.structure_seed}};
}

WorldConfig config_from_json(const json& j) {
    WorldConfig c;
    c.n_contexts = j.at("n_contexts").get<std::size_t>();
    c.responses_per_context = j.at("responses_per_context").get<std::size_t>();
    c.context_dim = j.at("context_dim").get<std::size_t>();
    c.response_dim = j.at("response_dim").get<std::size_t>();
    c.feature_noise = j.at("feature_noise").get<double>();
    c.latent_score_noise = j.at("latent_score_noise").get<double>();
    c.n_style = j.at("n_style").get<std::size_t>();
    c.style_scale = j.at("style_scale").get<double>();
    c.context_noise = j.at("context_noise").get<double>();
    c.regime_signal = j.at("regime_signal").get<double>();
    const auto mix = j.at("regime_mix");
    for (std::size_t i = 0; i < kRegimeCount; ++i) c.regime_mix[i] = mix.at(i).get<double>();
    c.integer_scores = j.at("integer_scores").get<bool>();
    c.score_extremity = j.at("score_extremity").get<double>();
    c.harm_tail_frac = j.at("harm_tail_frac").get<double>();
    c.harm_extremity = j.at("harm_extremity").get<double>();
    c.n_categories = j.at("n_categories").get<std::size_t>();
    c.length_min = j.at("length_min").get<int>();
    c.length_max = j.at("length_max").get<int>();
    c.correlated_attrs = j.at("correlated_attrs").get<bool>();
    c.structure_seed = j.at("structure_seed").get<std::uint64_t>();
    return c;
}

}  // namespace

void write_world_dir(const std::string& dir, const World& world,
                     const std::vector<AnnotationBundle>* bundles) {
    std::filesystem::create_directories(dir);

    std::unordered_map<std::uint64_t, const AnnotationBundle*> by_id;
    if (bundles)
        for (const auto& b : *bundles) by_id[b.response_id] = &b;

    {
        std::ofstream os(dir + "/contexts.jsonl");
        if (!os) throw Error("cannot write " + dir + "/contexts.jsonl");
        for (const auto& ctx : world.contexts) {
            json rec{{"context_id", ctx.id},
                     {"regime", static_cast<int>(ctx.regime)},
                     {"feature", feature_json(ctx.feature)}};
            os << rec.dump() << '\n';
        }
    }
    {
        std::ofstream os(dir + "/responses.jsonl");
        if (!os) throw Error("cannot write " + dir + "/responses.jsonl");
        for (const auto& resp : world.responses) {
            json rounds = json::array();
            auto it = by_id.find(resp.id);
            if (it != by_id.end()) {
                for (const auto& r : it->second->rounds)
                    rounds.push_back(json{{"help", r.help}, {"harm", r.harm},
                                          {"option", r.option}});
            }
            const Regime regime = world.context_by_id(resp.context_id).regime;
            json rec{{"response_id", resp.id},
                     {"context_id", resp.context_id},
                     {"regime", static_cast<int>(regime)},
                     {"s_help", resp.s_help},
                     {"s_harm", resp.s_harm},
                     {"length", resp.length},
                     {"category", resp.category},
                     {"feature", feature_json(resp.feature)},
                     {"rounds", rounds}};
            os << rec.dump() << '\n';
        }
    }
    {
        json meta{{"config", config_json(world.config)},
                  {"mixing", json::array()},
                  {"response_dim", world.config.response_dim}};
        for (std::size_t r = 0; r < world.mixing.shape()[0]; ++r) {
            json row = json::array();
            for (std::size_t c = 0; c < 3; ++c) row.push_back(world.mixing.at(r, c));
            meta["mixing"].push_back(row);
        }
        std::ofstream os(dir + "/world_meta.json");
        if (!os) throw Error("cannot write " + dir + "/world_meta.json");
        os << meta.dump(2) << '\n';
    }
}

World read_world_dir(const std::string& dir, std::vector<AnnotationBundle>* bundles_out) {
    World world;
    {
        std::ifstream is(dir + "/world_meta.json");
        if (!is) throw DataError("missing input: " + dir + "/world_meta.json");
        json meta = json::parse(is);
        world.config = config_from_json(meta.at("config"));
        world.mixing = NumArray({world.config.response_dim, 3});
        const auto& m = meta.at("mixing");
        for (std::size_t r = 0; r < world.config.response_dim; ++r)
            for (std::size_t c = 0; c < 3; ++c)
                world.mixing.at(r, c) = m.at(r).at(c).get<double>();
    }
    {
        std::ifstream is(dir + "/contexts.jsonl");
        if (!is) throw DataError("missing input: " + dir + "/contexts.jsonl");
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            json rec = json::parse(line);
            SynthContext ctx;
            ctx.id = rec.at("context_id").get<std::uint64_t>();
            ctx.regime = static_cast<Regime>(rec.at("regime").get<int>());
            ctx.feature = feature_from_json(rec.at("feature"));
            world.contexts.push_back(std::move(ctx));
        }
    }
    if (bundles_out) bundles_out->clear();
    {
        std::ifstream is(dir + "/responses.jsonl");
        if (!is) throw DataError("missing input: " + dir + "/responses.jsonl");
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            json rec = json::parse(line);
            SynthResponse resp;
            resp.id = rec.at("response_id").get<std::uint64_t>();
            resp.context_id = rec.at("context_id").get<std::uint64_t>();
            resp.s_help = rec.at("s_help").get<double>();
            resp.s_harm = rec.at("s_harm").get<double>();
            resp.length = rec.at("length").get<int>();
            resp.category = rec.at("category").get<int>();
            resp.feature = feature_from_json(rec.at("feature"));
            const auto& rounds = rec.at("rounds");
            if (bundles_out && rounds.size() == kRoundsPerResponse) {
                AnnotationBundle b;
                b.response_id = resp.id;
                for (std::size_t i = 0; i < kRoundsPerResponse; ++i) {
                    b.rounds[i].help = rounds.at(i).at("help").get<int>();
                    b.rounds[i].harm = rounds.at(i).at("harm").get<int>();
                    b.rounds[i].option = rounds.at(i).at("option").get<int>();
                }
                bundles_out->push_back(std::move(b));
            }
            world.responses.push_back(std::move(resp));
        }
    }
    return world;
}

}  // namespace rmlab
