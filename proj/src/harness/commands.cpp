#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "rmlab/linalg.hpp"

namespace rmlab {

using nlohmann::json;
namespace fs = std::filesystem;

std::string format_sig9(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

namespace {

struct CommandResult {
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;  // paths relative to nothing; absolute or as written
};

std::string need_arg(const CommandRequest& req, const std::string& key) {
    auto it = req.args.find(key);
    if (it == req.args.end() || it->second.empty())
        throw ConfigError("subcommand '" + req.subcommand + "' requires --" + key);
    return it->second;
}

std::vector<std::string> world_files(const std::string& dir) {
    return {dir + "/contexts.jsonl", dir + "/responses.jsonl", dir + "/world_meta.json"};
}

std::vector<std::string> corpus_files(const std::string& dir) {
    return {dir + "/d_bt.jsonl", dir + "/d_mse.jsonl", dir + "/templates.jsonl",
            dir + "/bin_report.json"};
}

// --- synth ----------------------------------------------------------------

CommandResult cmd_synth(const CommandRequest& req) {
    const std::string out = need_arg(req, "out");
    req.config.world.validate();
    const World world = gen_world(req.config.world, req.config.seed);
    write_world_dir(out, world, nullptr);
    return {{}, world_files(out)};
}

// --- annotate --------------------------------------------------------------

CommandResult cmd_annotate(const CommandRequest& req) {
    const std::string in = need_arg(req, "world");
    const std::string out = need_arg(req, "out");
    req.config.rater.validate();
    const World world = read_world_dir(in, nullptr);
    const std::vector<AnnotationBundle> bundles =
        annotate_world(world, req.config.rater, req.config.seed);
    // bundle invariants: five rounds, scores in -2..2, options in 0..4
    for (const auto& b : bundles)
        for (const auto& r : b.rounds)
            if (r.help < -2 || r.help > 2 || r.harm < -2 || r.harm > 2 || r.option < 0 ||
                r.option >= static_cast<int>(kRegimeCount))
                throw InvariantError("annotation round outside its documented range");
    write_world_dir(out, world, &bundles);
    return {world_files(in), world_files(out)};
}

// --- label -------------------------------------------------------------------

CommandResult cmd_label(const CommandRequest& req) {
    const std::string in = need_arg(req, "world");
    const std::string out = need_arg(req, "out");
    req.config.labeling.validate();
    std::vector<AnnotationBundle> bundles;
    const World world = read_world_dir(in, &bundles);
    if (bundles.empty())
        throw DataError("label: input world carries no annotation rounds; run annotate first");
    const std::vector<AggregatedLabel> labels =
        aggregate_corpus(bundles, world, req.config.labeling, req.config.seed);

    for (const AggregatedLabel& l : labels) {
        const WeightVector recon = interpolate_weight(l.w_base, l.w_target, l.alpha);
        if (l.alpha < 0.0 || l.alpha > 1.0 ||
            std::fabs(recon.w_help - l.w_final.w_help) > 1e-12 ||
            std::fabs(recon.w_harm - l.w_final.w_harm) > 1e-12)
            throw InvariantError("label: W_final is off its interpolation segment");
        if (!l.w_final.valid() || l.w_final.w_help > 1.0 || l.w_final.w_harm > 1.0)
            throw InvariantError("label: W_final components invalid");
        if (l.sigma_adj < req.config.labeling.sigma_min - 1e-15 ||
            l.sigma_adj > req.config.labeling.sigma_max + 1e-15)
            throw InvariantError("label: sigma_adj outside its clip range");
        const double s_w = l.w_final.w_help * l.help + l.w_final.w_harm * l.harm;
        if (std::fabs(s_w - l.s_w) > 1e-12)
            throw InvariantError("label: weighted target does not match its weights");
    }

    fs::create_directories(out);
    write_labels_jsonl(out + "/labels.jsonl", labels);
    return {world_files(in), {out + "/labels.jsonl"}};
}

// --- curate --------------------------------------------------------------------

CommandResult cmd_curate(const CommandRequest& req) {
    const std::string world_dir = need_arg(req, "world");
    const std::string labels_path = need_arg(req, "labels");
    const std::string out = need_arg(req, "out");
    req.config.curation.validate();

    const World world = read_world_dir(world_dir, nullptr);
    const std::vector<AggregatedLabel> labels = read_labels_jsonl(labels_path);
    const std::vector<PreferencePair> eligible =
        mine_pairs(labels, world, req.config.curation.delta_min);
    CuratedCorpus corpus = split_bt_mse(eligible, labels, world, req.config.curation,
                                        req.config.seed);
    corpus.templates = build_template_pool(labels, world, req.config.curation.template_pool,
                                           derive_seed(req.config.seed, "curate/templates"));
    inject_hard_negatives(corpus.d_bt, req.config.curation.hard_negative_p, corpus.templates,
                          req.config.curation.exact_fraction,
                          derive_seed(req.config.seed, "curate/inject"));

    for (const PreferencePair& p : corpus.d_bt)
        if (!(p.delta > req.config.curation.delta_min))
            throw InvariantError("curate: preference pair below the mining threshold");
    if (corpus.bins.max_drawn() > req.config.curation.per_bin)
        throw InvariantError("curate: a regression cell exceeds per_bin");

    write_corpus_dir(out, corpus);
    CommandResult result;
    result.inputs = world_files(world_dir);
    result.inputs.push_back(labels_path);
    result.outputs = corpus_files(out);
    return result;
}

// --- train-reward -----------------------------------------------------------------

CommandResult cmd_train_reward(const CommandRequest& req) {
    const std::string kind_name = need_arg(req, "kind");
    const std::string world_dir = need_arg(req, "world");
    const std::string corpus_dir = need_arg(req, "corpus");
    const std::string out = need_arg(req, "out");
    const RewardKind kind = reward_kind_from_name(kind_name);
    req.config.reward_train.validate();

    const World world = read_world_dir(world_dir, nullptr);
    const CuratedCorpus corpus = read_corpus_dir(corpus_dir);
    RewardDims dims = req.config.reward_dims;
    dims.feature_dim = world.config.response_dim;
    RewardNet net = RewardNet::build(kind, dims, req.config.seed);
    TrainConfig cfg = req.config.reward_train;
    cfg.seed = req.config.seed;
    const TrainResult trained = train(net, corpus, world, cfg);

    fs::create_directories(out);
    const std::string ckpt = out + "/reward_" + kind_name + ".rmlab";
    net.save(ckpt);
    json trace{{"kind", kind_name},
               {"loss_trace", trained.loss_trace},
               {"stage1_trace", trained.stage1_trace},
               {"steps", trained.steps}};
    std::ofstream os(out + "/train_trace.json");
    os << trace.dump(2) << '\n';

    CommandResult result;
    result.inputs = world_files(world_dir);
    for (const auto& f : corpus_files(corpus_dir)) result.inputs.push_back(f);
    result.outputs = {ckpt, out + "/train_trace.json"};
    return result;
}

// --- eval-reward ------------------------------------------------------------------

CommandResult cmd_eval_reward(const CommandRequest& req) {
    const std::string net_path = need_arg(req, "net");
    const std::string world_dir = need_arg(req, "world");
    const std::string labels_path = need_arg(req, "labels");
    const std::string out = need_arg(req, "out");

    const RewardNet net = RewardNet::load(net_path);
    const World world = read_world_dir(world_dir, nullptr);
    const std::vector<AggregatedLabel> labels = read_labels_jsonl(labels_path);
    const std::vector<EvalPair> pairs = make_eval_pairs(labels, world);
    const EvalReport report = eval_pref(net, pairs, world);

    fs::create_directories(out);
    write_eval_report(out + "/eval_report.json", reward_kind_name(net.kind()), report);

    std::ofstream table(out + "/eval_table.txt");
    table << "dimension threshold pairs accuracy\n";
    const char* dims[3] = {"help", "harm", "weighted"};
    for (std::size_t d = 0; d < 3; ++d)
        for (std::size_t t = 0; t < 2; ++t) {
            table << dims[d] << " >=" << report.thresholds[t] << ' ';
            const auto& cell = report.cells[d][t];
            if (cell)
                table << cell->pairs << ' ' << format_sig9(cell->accuracy()) << '\n';
            else
                table << "-- --\n";
        }
    table.close();

    CommandResult result;
    result.inputs = world_files(world_dir);
    result.inputs.push_back(labels_path);
    result.inputs.push_back(net_path);
    result.outputs = {out + "/eval_report.json", out + "/eval_table.txt"};
    return result;
}

// --- theory ----------------------------------------------------------------------

CommandResult cmd_theory(const CommandRequest& req) {
    const std::string out = need_arg(req, "out");
    const TheoryConfig& tc = req.config.theory;

    LinearFamily family =
        LinearFamily::make_default(derive_seed(req.config.seed, "theory/family"), tc.dim);

    const FisherSet fset = fisher(family, tc.n, derive_seed(req.config.seed, "theory/fisher"));
    double identity_gap = 0.0;
    for (std::size_t i = 0; i < fset.par.size(); ++i)
        identity_gap = std::max(identity_gap, std::fabs(fset.par[i] - fset.par_direct[i]));
    if (identity_gap > 1e-10)
        throw InvariantError("theory: information decomposition identity violated");
    const std::vector<double> diff_eig = [&] {
        NumArray diff = fset.par;
        for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= fset.single[i];
        return symmetric_eigenvalues(diff);
    }();

    McConfig mc;
    mc.n = tc.n;
    mc.replicates = tc.replicates;
    mc.holdout = tc.holdout;
    mc.pref_pairs = tc.pref_pairs;
    mc.literal_two_stage = tc.literal_two_stage;
    const McResult mcr = mc_orderings(family, mc, derive_seed(req.config.seed, "theory/mc"));

    std::vector<Quad> quads = lemma1_gaussian_quads(tc.lemma1_samples, 2.0, 0.5,
                                                    derive_seed(req.config.seed, "theory/lemma1"));
    // saturation stress: large true gaps, uninformative predictions
    quads.push_back({0.0, 0.0, 25.0, -25.0});
    quads.push_back({0.0, 0.0, -25.0, 25.0});
    quads.push_back({3.0, -3.0, 50.0, -50.0});
    const Lemma1Result l1 = lemma1_check(quads);

    const Lemma2Result l2 = lemma2_check(family, tc.lemma2_n, tc.lemma2_replicates,
                                         tc.lemma2_probes,
                                         derive_seed(req.config.seed, "theory/lemma2"));

    // doubling-n scaling companion for Lemma 2; sharing the stream nests the
    // designs and keeps the probe points identical
    const Lemma2Result l2_double =
        lemma2_check(family, 2 * tc.lemma2_n, tc.lemma2_replicates, tc.lemma2_probes,
                     derive_seed(req.config.seed, "theory/lemma2"));
    const double scale_pred = l2.predicted_mean / std::max(l2_double.predicted_mean, 1e-300);
    const double scale_emp = l2.empirical_mean / std::max(l2_double.empirical_mean, 1e-300);

    fs::create_directories(out);
    json results{
        {"fisher",
         {{"identity_gap", identity_gap},
          {"multi_min_eigenvalue", fset.multi_min_eigenvalue},
          {"par_minus_single_min_eigenvalue", diff_eig.front()},
          {"strict", fset.strict}}},
        {"theorem1",
         {{"replicates", tc.replicates},
          {"excluded_singular", mcr.excluded_singular},
          {"mse", {{"single", mcr.single_stats.mse_mean}, {"sequential", mcr.seq_stats.mse_mean},
                   {"parallel", mcr.par_stats.mse_mean}}},
          {"mse_stderr", {{"single", mcr.single_stats.mse_stderr},
                          {"sequential", mcr.seq_stats.mse_stderr},
                          {"parallel", mcr.par_stats.mse_stderr}}},
          {"pref", {{"single", mcr.single_stats.pref_mean}, {"sequential", mcr.seq_stats.pref_mean},
                    {"parallel", mcr.par_stats.pref_mean}}},
          {"win_rates",
           {{"par_lt_single_mse", mcr.win_rate(mcr.par_lt_single_mse)},
            {"par_lt_seq_mse", mcr.win_rate(mcr.par_lt_seq_mse)},
            {"par_lt_single_pref", mcr.win_rate(mcr.par_lt_single_pref)},
            {"par_lt_seq_pref", mcr.win_rate(mcr.par_lt_seq_pref)}}},
          {"indistinguishable", mcr.indistinguishable}}},
        {"lemma1",
         {{"samples", quads.size()},
          {"max_violation", l1.max_violation},
          {"worst_slack", l1.worst_slack}}},
        {"lemma2",
         {{"median_rel_gap", l2.median_rel_gap},
          {"predicted_mean", l2.predicted_mean},
          {"empirical_mean", l2.empirical_mean},
          {"halving_ratio_predicted", scale_pred},
          {"halving_ratio_empirical", scale_emp}}}};
    {
        std::ofstream os(out + "/results.json");
        os << results.dump(2) << '\n';
    }
    {
        std::ofstream os(out + "/verdicts.txt");
        auto verdict = [&](const std::string& name, bool holds, bool nonstrict,
                           const std::string& stats) {
            os << name << ' '
               << verdict_name(holds ? Verdict::holds
                                     : (nonstrict ? Verdict::holds_nonstrict : Verdict::fails))
               << ' ' << stats << '\n';
        };
        verdict("fisher-identity", identity_gap <= 1e-10, false,
                "max_gap=" + format_sig9(identity_gap));
        verdict("fisher-strict", diff_eig.front() > 0.0, false,
                "min_eig=" + format_sig9(diff_eig.front()));
        verdict("theorem1-mse",
                mcr.win_rate(mcr.par_lt_single_mse) >= 0.95 &&
                    mcr.win_rate(mcr.par_lt_seq_mse) >= 0.90,
                mcr.indistinguishable,
                "par<single=" + format_sig9(mcr.win_rate(mcr.par_lt_single_mse)) +
                    " par<seq=" + format_sig9(mcr.win_rate(mcr.par_lt_seq_mse)));
        verdict("theorem1-pref",
                mcr.win_rate(mcr.par_lt_single_pref) >= 0.95 &&
                    mcr.win_rate(mcr.par_lt_seq_pref) >= 0.90,
                mcr.indistinguishable,
                "par<single=" + format_sig9(mcr.win_rate(mcr.par_lt_single_pref)) +
                    " par<seq=" + format_sig9(mcr.win_rate(mcr.par_lt_seq_pref)));
        verdict("lemma1", l1.max_violation <= 1e-12, false,
                "max_violation=" + format_sig9(l1.max_violation));
        verdict("lemma2",
                l2.median_rel_gap < 0.15 && scale_pred >= 1.7 && scale_pred <= 2.3 &&
                    scale_emp >= 1.7 && scale_emp <= 2.3,
                false,
                "median_gap=" + format_sig9(l2.median_rel_gap) +
                    " halving=" + format_sig9(scale_emp));
    }
    return {{}, {out + "/results.json", out + "/verdicts.txt"}};
}

// --- riskclust ----------------------------------------------------------------------

CommandResult cmd_riskclust(const CommandRequest& req) {
    const std::string out = need_arg(req, "out");
    const RiskClustConfig& rc = req.config.riskclust;
    rc.corpus.validate();
    rc.train.validate();

    const RiskCorpus corpus = gen_risk_corpus(rc.corpus, req.config.seed);
    const ClusterMetrics before = cluster_metrics(corpus, nullptr);

    std::vector<std::size_t> widths{rc.corpus.dim};
    widths.insert(widths.end(), rc.head_hidden.begin(), rc.head_hidden.end());
    widths.push_back(rc.head_out);
    Mlp head = Mlp::init(widths, Activation::relu, derive_seed(req.config.seed, "risk/head"));
    const ProjectionTrace trace = train_projection(corpus, head, rc.train, req.config.seed);
    const ClusterMetrics after = cluster_metrics(corpus, &head);

    fs::create_directories(out);
    json metrics{{"before",
                  {{"intra_cosine", before.intra_cosine},
                   {"inter_cosine", before.inter_cosine},
                   {"silhouette", before.silhouette}}},
                 {"after",
                  {{"intra_cosine", after.intra_cosine},
                   {"inter_cosine", after.inter_cosine},
                   {"silhouette", after.silhouette}}},
                 {"loss_trace", trace.epoch_mean_loss}};
    {
        std::ofstream os(out + "/metrics.json");
        os << metrics.dump(2) << '\n';
    }
    write_projection_jsonl(out + "/projection.jsonl", corpus, &head);
    save_mlp_file(out + "/head.rmlab", head);
    return {{}, {out + "/metrics.json", out + "/projection.jsonl", out + "/head.rmlab"}};
}

// --- grpo -------------------------------------------------------------------------

CommandResult cmd_grpo(const CommandRequest& req) {
    const std::string net_path = need_arg(req, "net");
    const std::string out = need_arg(req, "out");
    const GrpoLabConfig& gc = req.config.grpo;
    gc.run.step.validate();

    const RewardNet reward = RewardNet::load(net_path);
    WorldConfig wc = req.config.world;
    wc.n_contexts = gc.n_contexts;
    wc.responses_per_context = gc.candidates_per_context;
    const World world = gen_world(wc, derive_seed(req.config.seed, "grpo/world"));
    const std::vector<CandidateSet> contexts = make_candidate_sets(world);
    const std::vector<ArbEval> evals =
        make_arbitration_set(world, gc.eval_contexts, derive_seed(req.config.seed, "grpo/arb"));

    Policy policy = Policy::init(wc.context_dim, wc.response_dim, gc.scorer_hidden,
                                 derive_seed(req.config.seed, "grpo/policy"));
    const ArbRates before = arbitration_metric(policy, evals);
    const GrpoRunResult run = grpo_train(policy, reward, contexts, gc.run, req.config.seed);
    const ArbRates after = arbitration_metric(policy, evals);

    fs::create_directories(out);
    write_grpo_diagnostics_jsonl(out + "/diagnostics.jsonl", run.steps, &after);
    json summary{{"start_mean_reward", run.start_mean_reward},
                 {"end_mean_reward", run.end_mean_reward},
                 {"final_exact_kl", run.final_exact_kl},
                 {"arbitration_before", before.rate},
                 {"arbitration_after", after.rate}};
    {
        std::ofstream os(out + "/summary.json");
        os << summary.dump(2) << '\n';
    }
    save_mlp_file(out + "/policy.rmlab", policy.scorer);
    return {{net_path},
            {out + "/diagnostics.jsonl", out + "/summary.json", out + "/policy.rmlab"}};
}

// --- report -----------------------------------------------------------------------

CommandResult cmd_report(const CommandRequest& req) {
    const std::string out = need_arg(req, "out");
    const std::string evals = need_arg(req, "evals");  // comma-separated eval_report.json paths
    std::string theory_verdicts;
    if (auto it = req.args.find("theory"); it != req.args.end()) theory_verdicts = it->second;

    std::map<std::string, std::array<std::array<std::pair<double, std::size_t>, 2>, 3>> sums;
    std::vector<std::string> eval_paths;
    {
        std::stringstream ss(evals);
        std::string p;
        while (std::getline(ss, p, ',')) eval_paths.push_back(p);
    }
    const char* dims[3] = {"help", "harm", "weighted"};
    for (const std::string& path : eval_paths) {
        std::ifstream is(path);
        if (!is) throw DataError("missing input: " + path);
        json rec = json::parse(is);
        const std::string kind = rec.at("kind").get<std::string>();
        for (std::size_t d = 0; d < 3; ++d)
            for (std::size_t t = 0; t < 2; ++t) {
                const std::string key = std::string(dims[d]) + "@" + (t == 0 ? "2" : "4");
                const auto& cell = rec.at("cells").at(key);
                if (cell.is_null()) continue;
                sums[kind][d][t].first += cell.at("accuracy").get<double>();
                sums[kind][d][t].second += 1;
            }
    }

    auto mean_cell = [&](const std::string& kind, std::size_t d, std::size_t t) -> double {
        auto it = sums.find(kind);
        if (it == sums.end() || it->second[d][t].second == 0) return -1.0;
        return it->second[d][t].first / static_cast<double>(it->second[d][t].second);
    };

    fs::create_directories(out);
    std::ofstream table(out + "/report.txt");
    table << "architecture help>=2 help>=4 harm>=2 harm>=4 weighted>=2 weighted>=4\n";
    for (const std::string kind : {"single", "sequential", "parallel"}) {
        if (!sums.count(kind)) continue;
        table << kind;
        for (std::size_t d = 0; d < 3; ++d)
            for (std::size_t t = 0; t < 2; ++t) {
                const double m = mean_cell(kind, d, t);
                table << ' ' << (m < 0.0 ? std::string("--") : format_sig9(m));
            }
        table << '\n';
    }
    const double w_single = mean_cell("single", 2, 0);
    const double w_seq = mean_cell("sequential", 2, 0);
    const double w_par = mean_cell("parallel", 2, 0);
    json verdict;
    if (w_single >= 0.0 && w_seq >= 0.0 && w_par >= 0.0) {
        const bool ordered = w_par > w_seq && w_seq > w_single;
        const bool gaps = (w_par - w_seq) >= 0.02 && (w_seq - w_single) >= 0.02;
        table << "ordering parallel>sequential>single "
              << (ordered && gaps ? "HOLDS" : "FAILS") << " weighted@2 par="
              << format_sig9(w_par) << " seq=" << format_sig9(w_seq)
              << " single=" << format_sig9(w_single) << '\n';
        verdict = json{{"ordered", ordered},
                       {"gaps_ok", gaps},
                       {"weighted_at_2",
                        {{"parallel", w_par}, {"sequential", w_seq}, {"single", w_single}}}};
    }
    if (!theory_verdicts.empty()) {
        std::ifstream tv(theory_verdicts);
        if (!tv) throw DataError("missing input: " + theory_verdicts);
        std::string line;
        while (std::getline(tv, line)) table << line << '\n';
    }
    table.close();

    json summary{{"architectures", json::object()}, {"verdict", verdict}};
    for (const auto& [kind, cells] : sums) {
        json k = json::object();
        for (std::size_t d = 0; d < 3; ++d)
            for (std::size_t t = 0; t < 2; ++t) {
                const double m = mean_cell(kind, d, t);
                if (m >= 0.0) k[std::string(dims[d]) + "@" + (t == 0 ? "2" : "4")] = m;
            }
        summary["architectures"][kind] = k;
    }
    {
        std::ofstream os(out + "/report.json");
        os << summary.dump(2) << '\n';
    }

    CommandResult result;
    result.inputs = eval_paths;
    if (!theory_verdicts.empty()) result.inputs.push_back(theory_verdicts);
    result.outputs = {out + "/report.txt", out + "/report.json"};
    return result;
}

}  // namespace

int run_command(const CommandRequest& req) {
    const auto started = std::chrono::steady_clock::now();

    CommandResult result;
    if (req.subcommand == "synth")
        result = cmd_synth(req);
    else if (req.subcommand == "annotate")
        result = cmd_annotate(req);
    else if (req.subcommand == "label")
        result = cmd_label(req);
    else if (req.subcommand == "curate")
        result = cmd_curate(req);
    else if (req.subcommand == "train-reward")
        result = cmd_train_reward(req);
    else if (req.subcommand == "eval-reward")
        result = cmd_eval_reward(req);
    else if (req.subcommand == "theory")
        result = cmd_theory(req);
    else if (req.subcommand == "riskclust")
        result = cmd_riskclust(req);
    else if (req.subcommand == "grpo")
        result = cmd_grpo(req);
    else if (req.subcommand == "report")
        result = cmd_report(req);
    else
        throw ConfigError("unknown subcommand: " + req.subcommand);

    const auto finished = std::chrono::steady_clock::now();

    RunManifest manifest;
    manifest.subcommand = req.subcommand;
    manifest.command = req.command_line;
    manifest.seed = req.config.seed;
    manifest.config = config_to_json(req.config);
    manifest.args = req.args;
    for (const std::string& path : result.inputs) manifest.inputs[path] = hash_file(path);
    for (const std::string& path : result.outputs) manifest.outputs[path] = hash_file(path);
    manifest.duration_ms =
        std::chrono::duration<double, std::milli>(finished - started).count();
    {
        // run identity: subcommand + resolved config + input identities
        json id{{"subcommand", req.subcommand},
                {"config", manifest.config},
                {"inputs", manifest.inputs}};
        std::ostringstream os;
        os << std::hex << fnv1a(id.dump());
        manifest.run_id = os.str();
    }
    write_manifest(need_arg(req, "out") + "/manifest.json", manifest);
    return exit_ok;
}

}  // namespace rmlab
