#include "rmlab/grpoloop.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace rmlab {

using nlohmann::json;

std::vector<CandidateSet> make_candidate_sets(const World& world) {
    std::vector<CandidateSet> sets;
    const auto groups = world.responses_by_context();
    sets.reserve(groups.size());
    for (std::size_t ci = 0; ci < groups.size(); ++ci) {
        CandidateSet set;
        set.context = world.contexts[ci];
        for (std::size_t idx : groups[ci]) set.candidates.push_back(world.responses[idx]);
        if (set.candidates.size() >= 2) sets.push_back(std::move(set));
    }
    return sets;
}

Policy Policy::init(std::size_t context_dim, std::size_t response_dim,
                    const std::vector<std::size_t>& hidden, std::uint64_t seed) {
    std::vector<std::size_t> widths{context_dim + response_dim};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(1);
    Policy p;
    p.scorer = Mlp::init(widths, Activation::relu, derive_seed(seed, "policy/init"));
    p.reference = p.scorer;
    return p;
}

namespace {

NumArray concat_features(const SynthContext& ctx, const SynthResponse& resp) {
    std::vector<double> vals;
    vals.reserve(ctx.feature.size() + resp.feature.size());
    vals.insert(vals.end(), ctx.feature.values().begin(), ctx.feature.values().end());
    vals.insert(vals.end(), resp.feature.values().begin(), resp.feature.values().end());
    return NumArray::vec(std::move(vals));
}

std::vector<double> softmax(std::span<const double> logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

std::vector<double> log_softmax(std::span<const double> logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
    return out;
}

std::vector<double> scorer_logits(const Mlp& scorer, const CandidateSet& set) {
    std::vector<double> logits(set.candidates.size());
    for (std::size_t j = 0; j < set.candidates.size(); ++j)
        logits[j] = scorer.forward(concat_features(set.context, set.candidates[j]))[0];
    return logits;
}

}  // namespace

double Policy::logit(const SynthContext& ctx, const SynthResponse& resp) const {
    return scorer.forward(concat_features(ctx, resp))[0];
}

std::vector<double> Policy::action_probs(const CandidateSet& set) const {
    return softmax(scorer_logits(scorer, set));
}

std::vector<double> Policy::reference_action_probs(const CandidateSet& set) const {
    return softmax(scorer_logits(reference, set));
}

std::vector<double> group_advantage(std::span<const double> rewards, double epsilon) {
    if (rewards.size() < 2) throw DegenerateBatchError("group_advantage: group size must be >= 2");
    if (epsilon < 0.0) throw ConfigError("group_advantage: epsilon must be >= 0");
    const double n = static_cast<double>(rewards.size());
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= n;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= n;  // population variance, the group size is fixed
    std::vector<double> adv(rewards.size());
    if (var == 0.0) return adv;  // all zeros, exactly
    const double denom = std::sqrt(var) + epsilon;
    for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / denom;
    return adv;
}

void GrpoConfig::validate() const {
    if (group_size < 2) throw ConfigError("grpo: group_size must be >= 2");
    if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw ConfigError("grpo: clip_eps must be in (0,1)");
    if (kl_coef < 0.0) throw ConfigError("grpo: kl_coef must be >= 0");
    if (lr < 0.0) throw ConfigError("grpo: learning rate must be >= 0");
}

StepDiagnostics grpo_step(Policy& policy, const RewardNet& reward,
                          std::span<const CandidateSet> batch, const GrpoConfig& cfg,
                          RngStream& rng) {
    cfg.validate();
    if (batch.empty()) throw ConfigError("grpo_step: empty context batch");

    MlpGrads grads(policy.scorer);
    StepDiagnostics diag;
    std::size_t clipped = 0, total = 0;
    const double inv_contexts = 1.0 / static_cast<double>(batch.size());

    for (const CandidateSet& set : batch) {
        const std::size_t n_cand = set.candidates.size();
        std::vector<MlpTape> tapes(n_cand);
        std::vector<double> logits(n_cand);
        for (std::size_t j = 0; j < n_cand; ++j)
            logits[j] =
                mlp_forward_tape(policy.scorer, concat_features(set.context, set.candidates[j]),
                                 tapes[j])[0];
        for (double v : logits)
            if (!std::isfinite(v))
                throw Error("grpo_step: non-finite logits for context " +
                            std::to_string(set.context.id));

        const std::vector<double> logp_cur = log_softmax(logits);
        const std::vector<double> probs = softmax(logits);
        const std::vector<double> logp_ref =
            log_softmax(scorer_logits(policy.reference, set));
        // current policy is the behavior policy for this step
        const std::vector<double> logp_old = logp_cur;

        // sample the group
        std::vector<std::size_t> actions(cfg.group_size);
        std::vector<double> rewards(cfg.group_size);
        for (std::size_t i = 0; i < cfg.group_size; ++i) {
            const double u = rng.uniform();
            double acc = 0.0;
            std::size_t pick = n_cand - 1;
            for (std::size_t j = 0; j < n_cand; ++j) {
                acc += probs[j];
                if (u < acc) {
                    pick = j;
                    break;
                }
            }
            actions[i] = pick;
            rewards[i] = reward.weighted_score(set.candidates[pick].feature);
            diag.mean_reward += rewards[i];
        }
        const std::vector<double> adv = group_advantage(rewards, cfg.advantage_epsilon);

        // d loss / d logp_cur(a_i), accumulated per action index
        std::vector<double> dlogp(n_cand, 0.0);
        const double inv_g = 1.0 / static_cast<double>(cfg.group_size);
        for (std::size_t i = 0; i < cfg.group_size; ++i) {
            const std::size_t a = actions[i];
            const double ratio = std::exp(logp_cur[a] - logp_old[a]);
            const double clipped_ratio =
                std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
            const double unclipped = ratio * adv[i];
            const double clamped = clipped_ratio * adv[i];
            ++total;
            if (clamped < unclipped) {
                // clipped branch active: zero gradient through the ratio
                ++clipped;
            } else {
                dlogp[a] += -adv[i] * ratio * inv_g * inv_contexts;
            }
            // k3 estimator of KL(current || reference)
            const double r = std::exp(logp_ref[a] - logp_cur[a]);
            diag.kl_estimate += (r - std::log(r) - 1.0) * inv_g * inv_contexts;
            dlogp[a] += cfg.kl_coef * (1.0 - r) * inv_g * inv_contexts;
        }

        // chain rule through log-softmax: d/dlogit_j = dlogp_j - p_j * sum(dlogp)
        double dsum = 0.0;
        for (double v : dlogp) dsum += v;
        for (std::size_t j = 0; j < n_cand; ++j) {
            const double dlogit = dlogp[j] - probs[j] * dsum;
            if (dlogit == 0.0) continue;
            mlp_backward(policy.scorer, tapes[j], NumArray::vec({dlogit}), grads);
        }
    }

    diag.mean_reward /= static_cast<double>(batch.size() * cfg.group_size);
    diag.clip_fraction = total ? static_cast<double>(clipped) / total : 0.0;

    std::vector<double> params = policy.scorer.flat_params();
    std::vector<double> flat(params.size(), 0.0);
    grads.add_flat_into(flat);
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg.lr * flat[i];
    policy.scorer.set_flat_params(params);
    return diag;
}

double mean_policy_reward(const Policy& policy, const RewardNet& reward,
                          std::span<const CandidateSet> contexts) {
    double total = 0.0;
    for (const CandidateSet& set : contexts) {
        const std::vector<double> probs = policy.action_probs(set);
        double e = 0.0;
        for (std::size_t j = 0; j < set.candidates.size(); ++j)
            e += probs[j] * reward.weighted_score(set.candidates[j].feature);
        total += e;
    }
    return total / static_cast<double>(contexts.size());
}

double exact_kl_to_reference(const Policy& policy, std::span<const CandidateSet> contexts) {
    double total = 0.0;
    for (const CandidateSet& set : contexts) {
        const std::vector<double> p = policy.action_probs(set);
        const std::vector<double> q = policy.reference_action_probs(set);
        double kl = 0.0;
        for (std::size_t j = 0; j < p.size(); ++j)
            if (p[j] > 0.0) kl += p[j] * (std::log(p[j]) - std::log(q[j]));
        total += kl;
    }
    return total / static_cast<double>(contexts.size());
}

GrpoRunResult grpo_train(Policy& policy, const RewardNet& reward,
                         std::span<const CandidateSet> contexts, const GrpoRunConfig& cfg,
                         std::uint64_t seed) {
    if (contexts.empty()) throw ConfigError("grpo_train: no contexts");
    GrpoRunResult result;
    result.start_mean_reward = mean_policy_reward(policy, reward, contexts);

    std::vector<std::size_t> order(contexts.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        RngStream rng(derive_seed(seed, "grpo/epoch", epoch));
        std::shuffle(order.begin(), order.end(), rng.engine());
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_contexts) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_contexts);
            std::vector<CandidateSet> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(contexts[order[i]]);
            result.steps.push_back(grpo_step(policy, reward, batch, cfg.step, rng));
        }
    }
    result.end_mean_reward = mean_policy_reward(policy, reward, contexts);
    result.final_exact_kl = exact_kl_to_reference(policy, contexts);
    return result;
}

// --- arbitration ---------------------------------------------------------------

std::vector<ArbEval> make_arbitration_set(const World& world, std::size_t n, std::uint64_t seed) {
    std::vector<ArbEval> evals;
    evals.reserve(n);
    const WorldConfig& cfg = world.config;
    for (std::size_t i = 0; i < n; ++i) {
        RngStream rng(derive_seed(seed, "arb/context", i));
        ArbEval e;
        e.context.id = 1'000'000'000ULL + i;  // clearly outside world ids
        e.context.regime = static_cast<Regime>(i % kRegimeCount);
        e.context.feature = NumArray({cfg.context_dim});
        for (std::size_t j = 0; j < cfg.context_dim; ++j)
            e.context.feature[j] = cfg.context_noise * rng.gaussian();
        e.context.feature[static_cast<std::size_t>(e.context.regime)] += cfg.regime_signal;
        const double w_help = canonical_weight(e.context.regime).w_help;

        auto make_candidate = [&](double s_help, double s_harm, std::uint64_t rid) {
            SynthResponse r;
            r.id = rid;
            r.context_id = e.context.id;
            r.s_help = s_help;
            r.s_harm = s_harm;
            r.length = cfg.length_min;
            r.category = 0;
            r.feature = response_feature(world.mixing, s_help, s_harm, w_help);
            for (double& v : r.feature.values()) v += cfg.feature_noise * rng.gaussian();
            return r;
        };
        e.help_dom = make_candidate(2.0, -2.0, 2 * i);
        e.safe_dom = make_candidate(-2.0, 2.0, 2 * i + 1);
        evals.push_back(std::move(e));
    }
    return evals;
}

ArbRates arbitration_rates(std::span<const ArbEval> evals,
                           const std::function<bool(const ArbEval&)>& picks_help) {
    ArbRates rates;
    std::array<std::size_t, kRegimeCount> appropriate{};
    for (const ArbEval& e : evals) {
        const std::size_t regime = static_cast<std::size_t>(e.context.regime);
        const bool help = picks_help(e);
        bool ok = false;
        if (regime <= 1)
            ok = help;
        else if (regime >= 3)
            ok = !help;
        else
            ok = true;  // balanced regime: either candidate counts
        rates.count[regime]++;
        if (ok) appropriate[regime]++;
    }
    for (std::size_t r = 0; r < kRegimeCount; ++r)
        rates.rate[r] = rates.count[r]
                            ? static_cast<double>(appropriate[r]) / rates.count[r]
                            : 0.0;
    return rates;
}

ArbRates arbitration_metric(const Policy& policy, std::span<const ArbEval> evals) {
    return arbitration_rates(evals, [&](const ArbEval& e) {
        return policy.logit(e.context, e.help_dom) > policy.logit(e.context, e.safe_dom);
    });
}

void write_grpo_diagnostics_jsonl(const std::string& path,
                                  const std::vector<StepDiagnostics>& steps,
                                  const ArbRates* final_rates) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path);
    for (std::size_t i = 0; i < steps.size(); ++i) {
        json rec{{"step", i},
                 {"mean_reward", steps[i].mean_reward},
                 {"kl", steps[i].kl_estimate},
                 {"clip_fraction", steps[i].clip_fraction}};
        os << rec.dump() << '\n';
    }
    if (final_rates) {
        json rec{{"arbitration_rates", final_rates->rate}, {"counts", final_rates->count}};
        os << rec.dump() << '\n';
    }
}

}  // namespace rmlab
