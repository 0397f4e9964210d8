#pragma once

// dabsim command-line frontend.
//
//   dabsim <run|sweep|detect-bench|check-condition|replay>
//          [--config PATH] [--out DIR] [--seed U64] [--workers N] [--set key=value]...
//
// Exit codes: 0 ok, 1 runtime error, 2 config error.

#include <iosfwd>
#include <map>
#include <set>
#include <string>

#include "dab/config.hpp"
#include "dab/harness.hpp"

namespace dab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

/// Every accepted configuration key.
const std::set<std::string>& known_keys();
/// Default values; keys without a default are absent.
const std::map<std::string, std::string>& default_values();

/// User values layered over the defaults, minus `workers` (which never
/// changes results). This is what resolved_config.txt contains.
KeyValueConfig resolve(const KeyValueConfig& user);

/// Experiment plan for run (first xi only) or sweep (every xi).
/// Rows are ordered by combo (as listed), then by ascending xi.
ExperimentPlan build_plan(const KeyValueConfig& resolved, bool sweep);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dab::cli
