#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

#include "rmlab/harness.hpp"

namespace rmlab {

using nlohmann::json;

json config_schema_json() { return config_to_json(LabConfig{}); }

json config_provenance() {
    // Defaults imported from the published method configuration vs. chosen
    // for this desk-scale tool.
    json p = json::object();
    const char* literature[] = {
        "curation.delta_min",       // high-fidelity pair threshold 3.6
        "curation.bt_frac",         // 85% of eligible pairs
        "curation.hard_negative_p", // 10% rejected-response substitution
        "reward.lambda",            // ranking and regression weighted equally
        "reward.stage2_bt_mse_ratio",  // 2:1 preference-to-regression sampling
        "grpo.group_size",          // 32 responses per prompt
        "grpo.kl_coef",             // 0.01 KL penalty
        "grpo.epochs",              // 2 passes over the prompt set
    };
    std::vector<std::string> lit(std::begin(literature), std::end(literature));

    std::function<void(const json&, const std::string&)> walk = [&](const json& node,
                                                                    const std::string& prefix) {
        for (auto it = node.begin(); it != node.end(); ++it) {
            const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
            if (it.value().is_object()) {
                walk(it.value(), path);
            } else {
                const bool is_lit = std::find(lit.begin(), lit.end(), path) != lit.end();
                p[path] = is_lit ? "literature-default" : "tool-default";
            }
        }
    };
    walk(config_schema_json(), "");
    return p;
}

namespace {

template <typename T>
void take(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void take_widths(const json& j, const char* key, std::vector<std::size_t>& out) {
    if (j.contains(key)) {
        out.clear();
        for (const auto& v : j.at(key)) out.push_back(v.get<std::size_t>());
    }
}

void reject_unknown(const json& node, const json& schema, const std::string& prefix) {
    for (auto it = node.begin(); it != node.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!schema.contains(it.key()))
            throw ConfigError("unknown config key: " + path);
        if (it.value().is_object() && schema.at(it.key()).is_object())
            reject_unknown(it.value(), schema.at(it.key()), path);
    }
}

}  // namespace

json config_to_json(const LabConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["world"] = {{"n_contexts", c.world.n_contexts},
                  {"responses_per_context", c.world.responses_per_context},
                  {"context_dim", c.world.context_dim},
                  {"response_dim", c.world.response_dim},
                  {"feature_noise", c.world.feature_noise},
                  {"latent_score_noise", c.world.latent_score_noise},
                  {"n_style", c.world.n_style},
                  {"style_scale", c.world.style_scale},
                  {"context_noise", c.world.context_noise},
                  {"regime_signal", c.world.regime_signal},
                  {"regime_mix", c.world.regime_mix},
                  {"integer_scores", c.world.integer_scores},
                  {"score_extremity", c.world.score_extremity},
                  {"harm_tail_frac", c.world.harm_tail_frac},
                  {"harm_extremity", c.world.harm_extremity},
                  {"n_categories", c.world.n_categories},
                  {"length_min", c.world.length_min},
                  {"length_max", c.world.length_max},
                  {"correlated_attrs", c.world.correlated_attrs},
                  {"structure_seed", c.world.structure_seed}};
    j["rater"] = {{"score_noise", c.rater.score_noise},
                  {"option_flip_prob", c.rater.option_flip_prob}};
    j["labeling"] = {{"sigma_min", c.labeling.sigma_min},
                     {"sigma_max", c.labeling.sigma_max},
                     {"gamma_var", c.labeling.gamma_var},
                     {"signed_step", c.labeling.signed_step}};
    j["curation"] = {{"delta_min", c.curation.delta_min},
                     {"bt_frac", c.curation.bt_frac},
                     {"length_bins", c.curation.length_bins},
                     {"sw_bins", c.curation.sw_bins},
                     {"per_bin", c.curation.per_bin},
                     {"hard_negative_p", c.curation.hard_negative_p},
                     {"exact_fraction", c.curation.exact_fraction},
                     {"overlap", c.curation.overlap == OverlapPolicy::allow ? "allow" : "exclude"},
                     {"template_pool", c.curation.template_pool}};
    j["reward"] = {{"lambda", c.reward_train.lambda},
                   {"epochs", c.reward_train.epochs},
                   {"stage1_epochs", c.reward_train.stage1_epochs},
                   {"batch_bt", c.reward_train.batch_bt},
                   {"batch_mse", c.reward_train.batch_mse},
                   {"lr", c.reward_train.lr},
                   {"momentum", c.reward_train.momentum},
                   {"stage2_bt_mse_ratio", c.reward_train.stage2_bt_mse_ratio},
                   {"backbone_hidden", c.reward_dims.backbone_hidden},
                   {"metavoter_hidden", c.reward_dims.metavoter_hidden},
                   {"activation", activation_name(c.reward_dims.activation)}};
    j["theory"] = {{"dim", c.theory.dim},
                   {"n", c.theory.n},
                   {"replicates", c.theory.replicates},
                   {"holdout", c.theory.holdout},
                   {"pref_pairs", c.theory.pref_pairs},
                   {"literal_two_stage", c.theory.literal_two_stage},
                   {"lemma1_samples", c.theory.lemma1_samples},
                   {"lemma2_n", c.theory.lemma2_n},
                   {"lemma2_replicates", c.theory.lemma2_replicates},
                   {"lemma2_probes", c.theory.lemma2_probes}};
    j["riskclust"] = {{"n_classes", c.riskclust.corpus.n_classes},
                      {"per_class", c.riskclust.corpus.per_class},
                      {"dim", c.riskclust.corpus.dim},
                      {"separation", c.riskclust.corpus.separation},
                      {"nuisance_scale", c.riskclust.corpus.nuisance_scale},
                      {"n_nuisance", c.riskclust.corpus.n_nuisance},
                      {"iso_noise", c.riskclust.corpus.iso_noise},
                      {"temperature", c.riskclust.train.temperature},
                      {"epochs", c.riskclust.train.epochs},
                      {"batch", c.riskclust.train.batch},
                      {"lr", c.riskclust.train.lr},
                      {"momentum", c.riskclust.train.momentum},
                      {"head_hidden", c.riskclust.head_hidden},
                      {"head_out", c.riskclust.head_out}};
    j["grpo"] = {{"group_size", c.grpo.run.step.group_size},
                 {"clip_eps", c.grpo.run.step.clip_eps},
                 {"kl_coef", c.grpo.run.step.kl_coef},
                 {"lr", c.grpo.run.step.lr},
                 {"epochs", c.grpo.run.epochs},
                 {"batch_contexts", c.grpo.run.batch_contexts},
                 {"scorer_hidden", c.grpo.scorer_hidden},
                 {"n_contexts", c.grpo.n_contexts},
                 {"candidates_per_context", c.grpo.candidates_per_context},
                 {"eval_contexts", c.grpo.eval_contexts}};
    return j;
}

LabConfig config_from_json(const json& j) {
    reject_unknown(j, config_schema_json(), "");

    LabConfig c;
    take(j, "seed", c.seed);
    if (j.contains("world")) {
        const json& w = j.at("world");
        take(w, "n_contexts", c.world.n_contexts);
        take(w, "responses_per_context", c.world.responses_per_context);
        take(w, "context_dim", c.world.context_dim);
        take(w, "response_dim", c.world.response_dim);
        take(w, "feature_noise", c.world.feature_noise);
        take(w, "latent_score_noise", c.world.latent_score_noise);
        take(w, "n_style", c.world.n_style);
        take(w, "style_scale", c.world.style_scale);
        take(w, "context_noise", c.world.context_noise);
        take(w, "regime_signal", c.world.regime_signal);
        if (w.contains("regime_mix")) {
            const auto& m = w.at("regime_mix");
            if (m.size() != kRegimeCount)
                throw ConfigError("world.regime_mix must have 5 entries");
            for (std::size_t i = 0; i < kRegimeCount; ++i)
                c.world.regime_mix[i] = m.at(i).get<double>();
        }
        take(w, "integer_scores", c.world.integer_scores);
        take(w, "score_extremity", c.world.score_extremity);
        take(w, "harm_tail_frac", c.world.harm_tail_frac);
        take(w, "harm_extremity", c.world.harm_extremity);
        take(w, "n_categories", c.world.n_categories);
        take(w, "length_min", c.world.length_min);
        take(w, "length_max", c.world.length_max);
        take(w, "correlated_attrs", c.world.correlated_attrs);
        take(w, "structure_seed", c.world.structure_seed);
    }
    if (j.contains("rater")) {
        const json& r = j.at("rater");
        take(r, "score_noise", c.rater.score_noise);
        take(r, "option_flip_prob", c.rater.option_flip_prob);
    }
    if (j.contains("labeling")) {
        const json& l = j.at("labeling");
        take(l, "sigma_min", c.labeling.sigma_min);
        take(l, "sigma_max", c.labeling.sigma_max);
        take(l, "gamma_var", c.labeling.gamma_var);
        take(l, "signed_step", c.labeling.signed_step);
    }
    if (j.contains("curation")) {
        const json& cu = j.at("curation");
        take(cu, "delta_min", c.curation.delta_min);
        take(cu, "bt_frac", c.curation.bt_frac);
        take(cu, "length_bins", c.curation.length_bins);
        take(cu, "sw_bins", c.curation.sw_bins);
        take(cu, "per_bin", c.curation.per_bin);
        take(cu, "hard_negative_p", c.curation.hard_negative_p);
        take(cu, "exact_fraction", c.curation.exact_fraction);
        if (cu.contains("overlap")) {
            const std::string o = cu.at("overlap").get<std::string>();
            if (o == "allow")
                c.curation.overlap = OverlapPolicy::allow;
            else if (o == "exclude")
                c.curation.overlap = OverlapPolicy::exclude;
            else
                throw ConfigError("curation.overlap must be 'allow' or 'exclude'");
        }
        take(cu, "template_pool", c.curation.template_pool);
    }
    if (j.contains("reward")) {
        const json& r = j.at("reward");
        take(r, "lambda", c.reward_train.lambda);
        take(r, "epochs", c.reward_train.epochs);
        take(r, "stage1_epochs", c.reward_train.stage1_epochs);
        take(r, "batch_bt", c.reward_train.batch_bt);
        take(r, "batch_mse", c.reward_train.batch_mse);
        take(r, "lr", c.reward_train.lr);
        take(r, "momentum", c.reward_train.momentum);
        take(r, "stage2_bt_mse_ratio", c.reward_train.stage2_bt_mse_ratio);
        take_widths(r, "backbone_hidden", c.reward_dims.backbone_hidden);
        take_widths(r, "metavoter_hidden", c.reward_dims.metavoter_hidden);
        if (r.contains("activation"))
            c.reward_dims.activation = activation_from_name(r.at("activation").get<std::string>());
    }
    if (j.contains("theory")) {
        const json& t = j.at("theory");
        take(t, "dim", c.theory.dim);
        take(t, "n", c.theory.n);
        take(t, "replicates", c.theory.replicates);
        take(t, "holdout", c.theory.holdout);
        take(t, "pref_pairs", c.theory.pref_pairs);
        take(t, "literal_two_stage", c.theory.literal_two_stage);
        take(t, "lemma1_samples", c.theory.lemma1_samples);
        take(t, "lemma2_n", c.theory.lemma2_n);
        take(t, "lemma2_replicates", c.theory.lemma2_replicates);
        take(t, "lemma2_probes", c.theory.lemma2_probes);
    }
    if (j.contains("riskclust")) {
        const json& r = j.at("riskclust");
        take(r, "n_classes", c.riskclust.corpus.n_classes);
        take(r, "per_class", c.riskclust.corpus.per_class);
        take(r, "dim", c.riskclust.corpus.dim);
        take(r, "separation", c.riskclust.corpus.separation);
        take(r, "nuisance_scale", c.riskclust.corpus.nuisance_scale);
        take(r, "n_nuisance", c.riskclust.corpus.n_nuisance);
        take(r, "iso_noise", c.riskclust.corpus.iso_noise);
        take(r, "temperature", c.riskclust.train.temperature);
        take(r, "epochs", c.riskclust.train.epochs);
        take(r, "batch", c.riskclust.train.batch);
        take(r, "lr", c.riskclust.train.lr);
        take(r, "momentum", c.riskclust.train.momentum);
        take_widths(r, "head_hidden", c.riskclust.head_hidden);
        take(r, "head_out", c.riskclust.head_out);
    }
    if (j.contains("grpo")) {
        const json& g = j.at("grpo");
        take(g, "group_size", c.grpo.run.step.group_size);
        take(g, "clip_eps", c.grpo.run.step.clip_eps);
        take(g, "kl_coef", c.grpo.run.step.kl_coef);
        take(g, "lr", c.grpo.run.step.lr);
        take(g, "epochs", c.grpo.run.epochs);
        take(g, "batch_contexts", c.grpo.run.batch_contexts);
        take_widths(g, "scorer_hidden", c.grpo.scorer_hidden);
        take(g, "n_contexts", c.grpo.n_contexts);
        take(g, "candidates_per_context", c.grpo.candidates_per_context);
        take(g, "eval_contexts", c.grpo.eval_contexts);
    }
    return c;
}

LabConfig config_load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("missing input: " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    const std::string text = buf.str();
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        // translate byte offset into line/column
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError("config parse error at line " + std::to_string(line) + ", column " +
                          std::to_string(col) + ": " + e.what());
    }
    try {
        return config_from_json(j);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config value error: ") + e.what());
    }
}

}  // namespace rmlab
