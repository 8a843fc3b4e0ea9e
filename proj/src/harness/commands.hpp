#pragma once

#include <map>
#include <string>
#include <vector>

#include "rmlab/harness.hpp"

namespace rmlab {

// Raised when a module-level invariant fails during a run; maps to
// exit_invariant.
struct InvariantError : Error {
    using Error::Error;
};

struct CommandRequest {
    std::string subcommand;
    std::map<std::string, std::string> args;  // named path arguments + "out"
    LabConfig config;
    std::vector<std::string> command_line;
};

// Executes the subcommand, writes its declared outputs and the run manifest
// under args.at("out"), and returns exit_ok. Failures are thrown.
int run_command(const CommandRequest& request);

// Comparison tables for the `report` subcommand (also used directly by the
// acceptance suite).
struct ArchitectureSummary {
    std::string kind;
    // mean accuracy per (dim, threshold); negative when absent
    double cells[3][2];
    std::size_t runs = 0;
};

std::string format_sig9(double v);

}  // namespace rmlab
