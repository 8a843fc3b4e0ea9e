#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmlab/curation.hpp"
#include "rmlab/grpoloop.hpp"
#include "rmlab/labeling.hpp"
#include "rmlab/rewardlab.hpp"
#include "rmlab/riskclust.hpp"
#include "rmlab/synthworld.hpp"
#include "rmlab/theorylab.hpp"

namespace rmlab {

// Exit codes, one per failure class.
enum ExitCode : int {
    exit_ok = 0,
    exit_usage = 2,       // unknown flags / malformed command line
    exit_config = 3,      // schema-invalid or out-of-range configuration
    exit_missing = 4,     // missing input file
    exit_invariant = 5,   // a module-level invariant failed during the run
    exit_runtime = 6,     // numeric failure (divergence, singularity)
};

struct TheoryConfig {
    std::size_t dim = 6;
    std::size_t n = 60;
    std::size_t replicates = 200;
    std::size_t holdout = 400;
    std::size_t pref_pairs = 1000;
    bool literal_two_stage = false;
    std::size_t lemma1_samples = 100000;
    std::size_t lemma2_n = 500;
    std::size_t lemma2_replicates = 1000;
    std::size_t lemma2_probes = 32;
};

struct RiskClustConfig {
    RiskCorpusConfig corpus;
    ProjectionTrainConfig train;
    std::vector<std::size_t> head_hidden = {32};
    std::size_t head_out = 8;
};

struct GrpoLabConfig {
    GrpoRunConfig run;
    std::vector<std::size_t> scorer_hidden = {32};
    std::size_t n_contexts = 500;
    std::size_t candidates_per_context = 8;
    std::size_t eval_contexts = 2000;
};

// The full resolved configuration; every field has an explicit default, and
// config files may override any subset (unknown keys are rejected).
struct LabConfig {
    std::uint64_t seed = 7;
    WorldConfig world;
    RaterNoise rater;
    AdjustParams labeling;
    CurationConfig curation;
    TrainConfig reward_train;
    RewardDims reward_dims;
    TheoryConfig theory;
    RiskClustConfig riskclust;
    GrpoLabConfig grpo;
};

// Default config as JSON (the schema), plus the provenance of each default:
// values imported from published method defaults are tagged
// "literature-default", everything else "tool-default".
nlohmann::json config_schema_json();
nlohmann::json config_provenance();

// Parses and validates a config file against the schema; unknown keys are
// rejected by full path ("curation.bt_frc"). Throws ConfigError with
// line/column on parse errors.
LabConfig config_load(const std::string& path);
LabConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const LabConfig& c);

// --- run manifests ------------------------------------------------------------

struct RunManifest {
    std::string run_id;
    std::string subcommand;
    std::vector<std::string> command;
    std::uint64_t seed = 0;
    nlohmann::json config;
    std::map<std::string, std::string> args;     // input/output path arguments
    std::map<std::string, std::string> inputs;   // path -> content hash
    std::map<std::string, std::string> outputs;  // path -> content hash
    double duration_ms = 0.0;
};

std::string hash_file(const std::string& path);
void write_manifest(const std::string& path, const RunManifest& m);
RunManifest read_manifest(const std::string& path);

// --- dispatch -------------------------------------------------------------------

// Full CLI entry point; returns the process exit code.
int cli_dispatch(const std::vector<std::string>& args);

}  // namespace rmlab
