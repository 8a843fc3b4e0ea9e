#include "rmlab/labeling.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace rmlab {

using nlohmann::json;

namespace {

struct ModeResult {
    int value = 0;
    double variance = 0.0;
};

// Mode over -2..2 with tie-breaks: closest to mean, then smaller |value|,
// then smaller value. Variance is the population variance (divide by 5),
// accumulated from integer sums so round order cannot perturb it.
ModeResult score_mode(const std::array<int, kRoundsPerResponse>& scores) {
    long sum = 0, sum_sq = 0;
    for (int s : scores) {
        sum += s;
        sum_sq += static_cast<long>(s) * s;
    }
    const double n = static_cast<double>(scores.size());
    const double mean = static_cast<double>(sum) / n;
    const double var =
        (static_cast<double>(sum_sq) - static_cast<double>(sum) * static_cast<double>(sum) / n) /
        n;

    std::array<int, 5> counts{};  // index = value + 2
    for (int s : scores) counts[static_cast<std::size_t>(s + 2)]++;
    const int best_count = *std::max_element(counts.begin(), counts.end());

    int best = 3;  // outside -2..2
    bool have = false;
    for (int v = -2; v <= 2; ++v) {
        if (counts[static_cast<std::size_t>(v + 2)] != best_count) continue;
        if (!have) {
            best = v;
            have = true;
            continue;
        }
        const double dv = std::fabs(v - mean), db = std::fabs(best - mean);
        if (dv < db ||
            (dv == db && (std::abs(v) < std::abs(best) ||
                          (std::abs(v) == std::abs(best) && v < best))))
            best = v;
    }
    return {best, var};
}

}  // namespace

VoteSummary majority_vote(const AnnotationBundle& bundle) {
    std::array<int, kRoundsPerResponse> help{}, harm{};
    std::array<int, kRegimeCount> option_counts{};
    for (std::size_t i = 0; i < kRoundsPerResponse; ++i) {
        const AnnotationRound& r = bundle.rounds[i];
        if (r.help < -2 || r.help > 2 || r.harm < -2 || r.harm > 2)
            throw DataError("annotation score outside -2..2");
        if (r.option < 0 || r.option >= static_cast<int>(kRegimeCount))
            throw DataError("annotation weight option outside 0..4");
        help[i] = r.help;
        harm[i] = r.harm;
        option_counts[static_cast<std::size_t>(r.option)]++;
    }

    VoteSummary out;
    const ModeResult h = score_mode(help);
    const ModeResult s = score_mode(harm);
    out.help_mode = h.value;
    out.harm_mode = s.value;
    out.var_help = h.variance;
    out.var_harm = s.variance;

    // option ties break toward the safer option (higher index = higher w_harm)
    int best = 0, best_count = -1;
    for (int idx = 0; idx < static_cast<int>(kRegimeCount); ++idx) {
        const int c = option_counts[static_cast<std::size_t>(idx)];
        if (c >= best_count) {
            best = idx;
            best_count = c;
        }
    }
    out.option_mode = best;
    out.w_base = canonical_weight(best);
    return out;
}

WeightVector select_target(const WeightVector& w_base, double var_help, double var_harm) {
    const double wh = w_base.w_help, ws = w_base.w_harm;
    if (wh > ws && var_harm > var_help) return {1.0, 0.0};
    if (ws > wh && var_help <= var_harm) return {0.5, 0.5};
    if (wh > ws && var_harm <= var_help) return {0.5, 0.5};
    if (ws > wh && var_help > var_harm) return {0.0, 1.0};
    return w_base;
}

void AdjustParams::validate() const {
    if (!(sigma_min > 0.0) || !(sigma_max >= sigma_min))
        throw ConfigError("adjust: need 0 < sigma_min <= sigma_max");
    if (gamma_var < 0.0) throw ConfigError("adjust: gamma_var must be non-negative");
}

WeightVector interpolate_weight(const WeightVector& base, const WeightVector& target,
                                double alpha) {
    return {base.w_help + alpha * (target.w_help - base.w_help),
            base.w_harm + alpha * (target.w_harm - base.w_harm)};
}

WeightAdjustment adjust_weight(const WeightVector& w_base, double var_help, double var_harm,
                               const AdjustParams& params, RngStream& rng) {
    params.validate();
    if (var_help < 0.0 || var_harm < 0.0) throw ConfigError("adjust: variances must be >= 0");

    WeightAdjustment out;
    out.w_target = select_target(w_base, var_help, var_harm);
    out.sigma_adj = std::clamp(params.sigma_min + params.gamma_var * std::fabs(var_help - var_harm),
                               params.sigma_min, params.sigma_max);
    const double draw = rng.gaussian(0.0, out.sigma_adj);
    out.alpha_step = std::clamp(params.signed_step ? draw : std::fabs(draw), 0.0, 1.0);
    out.w_final = interpolate_weight(w_base, out.w_target, out.alpha_step);
    return out;
}

std::vector<AggregatedLabel> aggregate_corpus(const std::vector<AnnotationBundle>& bundles,
                                              const World& world, const AdjustParams& params,
                                              std::uint64_t seed) {
    params.validate();
    std::vector<AggregatedLabel> out;
    out.reserve(bundles.size());
    for (const AnnotationBundle& b : bundles) {
        world.response_by_id(b.response_id);  // throws DataError on dangling id
        RngStream rng(derive_seed(seed, "label/response", b.response_id));
        const VoteSummary vote = majority_vote(b);
        const WeightAdjustment adj =
            adjust_weight(vote.w_base, vote.var_help, vote.var_harm, params, rng);

        AggregatedLabel label;
        label.response_id = b.response_id;
        label.help = vote.help_mode;
        label.harm = vote.harm_mode;
        label.var_help = vote.var_help;
        label.var_harm = vote.var_harm;
        label.w_base = vote.w_base;
        label.w_target = adj.w_target;
        label.sigma_adj = adj.sigma_adj;
        label.alpha = adj.alpha_step;
        label.w_final = adj.w_final;
        label.s_w = label.w_final.w_help * label.help + label.w_final.w_harm * label.harm;
        out.push_back(label);
    }
    return out;
}

void write_labels_jsonl(const std::string& path, const std::vector<AggregatedLabel>& labels) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path);
    for (const AggregatedLabel& l : labels) {
        json rec{{"response_id", l.response_id},
                 {"help", l.help},
                 {"harm", l.harm},
                 {"var_h", l.var_help},
                 {"var_s", l.var_harm},
                 {"w_base", {l.w_base.w_help, l.w_base.w_harm}},
                 {"w_target", {l.w_target.w_help, l.w_target.w_harm}},
                 {"sigma_adj", l.sigma_adj},
                 {"alpha", l.alpha},
                 {"w_final", {l.w_final.w_help, l.w_final.w_harm}},
                 {"s_w", l.s_w}};
        os << rec.dump() << '\n';
    }
}

std::vector<AggregatedLabel> read_labels_jsonl(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("missing input: " + path);
    std::vector<AggregatedLabel> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        json rec = json::parse(line);
        AggregatedLabel l;
        l.response_id = rec.at("response_id").get<std::uint64_t>();
        l.help = rec.at("help").get<int>();
        l.harm = rec.at("harm").get<int>();
        l.var_help = rec.at("var_h").get<double>();
        l.var_harm = rec.at("var_s").get<double>();
        l.w_base = {rec.at("w_base").at(0).get<double>(), rec.at("w_base").at(1).get<double>()};
        l.w_target = {rec.at("w_target").at(0).get<double>(),
                      rec.at("w_target").at(1).get<double>()};
        l.sigma_adj = rec.at("sigma_adj").get<double>();
        l.alpha = rec.at("alpha").get<double>();
        l.w_final = {rec.at("w_final").at(0).get<double>(), rec.at("w_final").at(1).get<double>()};
        l.s_w = rec.at("s_w").get<double>();
        out.push_back(l);
    }
    return out;
}

}  // namespace rmlab
