#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

namespace rmlab {

namespace {

struct CliState {
    std::string config_path;
    std::string out, world, labels, corpus, net, kind, evals, theory, manifest;
    bool has_seed = false;
    std::uint64_t seed = 0;
    bool has_bt_frac = false;
    double bt_frac = 0.0;
    bool has_lambda = false;
    double lambda = 0.0;
    bool has_replicates = false;
    std::size_t replicates = 0;
    bool has_contexts = false;
    std::size_t contexts = 0;
};

void add_common(CLI::App* cmd, CliState& st) {
    cmd->add_option("--config", st.config_path, "config file (JSON)");
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&st](const std::uint64_t& v) { st.seed = v; st.has_seed = true; },
        "master seed override");
    cmd->add_option("--out", st.out, "output directory")->required();
}

LabConfig resolve_config(const CliState& st) {
    LabConfig config = st.config_path.empty() ? LabConfig{} : config_load(st.config_path);
    if (st.has_seed) config.seed = st.seed;
    if (st.has_bt_frac) config.curation.bt_frac = st.bt_frac;
    if (st.has_lambda) config.reward_train.lambda = st.lambda;
    if (st.has_replicates) config.theory.replicates = st.replicates;
    if (st.has_contexts) config.world.n_contexts = st.contexts;
    return config;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args) {
    CLI::App app{"desk-scale preference, reward-model and policy-optimization laboratory"};
    app.require_subcommand(1);
    CliState st;

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic world");
    add_common(synth, st);
    synth->add_option_function<std::size_t>(
        "--contexts", [&st](const std::size_t& v) { st.contexts = v; st.has_contexts = true; },
        "context count override");

    CLI::App* annotate = app.add_subcommand("annotate", "simulate five rater rounds per response");
    add_common(annotate, st);
    annotate->add_option("--world", st.world, "world directory")->required();

    CLI::App* label = app.add_subcommand("label", "aggregate rounds into final labels");
    add_common(label, st);
    label->add_option("--world", st.world, "annotated world directory")->required();

    CLI::App* curate = app.add_subcommand("curate", "partition labels into D_BT / D_MSE");
    add_common(curate, st);
    curate->add_option("--world", st.world, "world directory")->required();
    curate->add_option("--labels", st.labels, "labels.jsonl")->required();
    curate->add_option_function<double>(
        "--bt-frac", [&st](const double& v) { st.bt_frac = v; st.has_bt_frac = true; },
        "fraction of eligible pairs assigned to D_BT");

    CLI::App* train_cmd = app.add_subcommand("train-reward", "train a reward architecture");
    add_common(train_cmd, st);
    train_cmd->add_option("--kind", st.kind, "single|sequential|parallel")->required();
    train_cmd->add_option("--world", st.world, "world directory")->required();
    train_cmd->add_option("--corpus", st.corpus, "curated corpus directory")->required();
    train_cmd->add_option_function<double>(
        "--lambda", [&st](const double& v) { st.lambda = v; st.has_lambda = true; },
        "ranking/regression balance");

    CLI::App* eval_cmd = app.add_subcommand("eval-reward", "preference accuracy on held-out pairs");
    add_common(eval_cmd, st);
    eval_cmd->add_option("--net", st.net, "reward checkpoint")->required();
    eval_cmd->add_option("--world", st.world, "evaluation world directory")->required();
    eval_cmd->add_option("--labels", st.labels, "evaluation labels.jsonl")->required();

    CLI::App* theory = app.add_subcommand("theory", "information-ordering verification");
    add_common(theory, st);
    theory->add_option_function<std::size_t>(
        "--replicates",
        [&st](const std::size_t& v) { st.replicates = v; st.has_replicates = true; },
        "Monte Carlo replicates");

    CLI::App* risk = app.add_subcommand("riskclust", "severity-contrastive projection training");
    add_common(risk, st);

    CLI::App* grpo = app.add_subcommand("grpo", "group-relative policy optimization loop");
    add_common(grpo, st);
    grpo->add_option("--net", st.net, "trained reward checkpoint")->required();

    CLI::App* report = app.add_subcommand("report", "aggregate runs into a comparison table");
    add_common(report, st);
    report->add_option("--evals", st.evals, "comma-separated eval_report.json paths")->required();
    report->add_option("--theory", st.theory, "theory verdicts.txt");

    CLI::App* rerun = app.add_subcommand("rerun", "re-execute a run from its manifest");
    rerun->add_option("--manifest", st.manifest, "manifest.json of the original run")->required();
    rerun->add_option("--out", st.out, "output directory")->required();

    std::vector<std::string> argv_like(args.rbegin(), args.rend());
    try {
        app.parse(argv_like);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            std::cout << app.help() << std::endl;
            return exit_ok;
        }
        std::cerr << "usage error: " << e.what() << std::endl;
        return exit_usage;
    }

    try {
        CommandRequest req;
        req.command_line = args;

        if (rerun->parsed()) {
            const RunManifest m = read_manifest(st.manifest);
            req.subcommand = m.subcommand;
            req.args = m.args;
            req.args["out"] = st.out;
            req.config = config_from_json(m.config);
        } else {
            req.subcommand = app.get_subcommands().front()->get_name();
            req.config = resolve_config(st);
            req.args["out"] = st.out;
            if (!st.world.empty()) req.args["world"] = st.world;
            if (!st.labels.empty()) req.args["labels"] = st.labels;
            if (!st.corpus.empty()) req.args["corpus"] = st.corpus;
            if (!st.net.empty()) req.args["net"] = st.net;
            if (!st.kind.empty()) req.args["kind"] = st.kind;
            if (!st.evals.empty()) req.args["evals"] = st.evals;
            if (!st.theory.empty()) req.args["theory"] = st.theory;
        }
        return run_command(req);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << std::endl;
        return exit_config;
    } catch (const DataError& e) {
        std::cerr << "input error: " << e.what() << std::endl;
        return exit_missing;
    } catch (const InvariantError& e) {
        std::cerr << "invariant violated: " << e.what() << std::endl;
        return exit_invariant;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return exit_runtime;
    }
}

}  // namespace rmlab
