#pragma once

#include "vole/simulator.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>

namespace vole::cli
{

/// Everything needed to reproduce a run.
struct RunConfig {
    ModelParams params{};
    int p = 100;
    int refine = 100;
    int years = 20000;
    InitialCondition init = InitialCondition::II;
    std::uint64_t seed = 1;
    long long first_year = 19001;
    long long last_year = 20000;
    double delta_t = 0.0;

    void validate() const;
};

/// Flat key=value text; `#` starts a comment. Unknown or repeated keys are
/// config errors.
std::map<std::string, std::string> parse_config_text(const std::string& text);

/// Applies key=value pairs on top of `cfg`.
void apply_config(RunConfig& cfg, const std::map<std::string, std::string>& entries);

/// Runs one subcommand. Returns the process exit status: 0 on success, 2 for
/// configuration errors, 3 for numeric failures, 4 for I/O failures.
int run_command(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace vole::cli
