#pragma once

// The `tfa` command-line front end.
//
//   tfa synth | profile | train | encode | analyze <pipeline>
//
// Options come from flags and from an optional TOML `--config` file whose
// tables are named after the command path ([train], [analyze.noise], ...).
// Flags win over the file. Each run writes resolved_config.toml into --out.
//
// Exit codes: 0 success, 2 usage or configuration, 3 data, 4 numeric failure,
// 1 anything else.

#include <ostream>
#include <string>
#include <vector>

namespace tfa::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

inline constexpr const char* kResolvedConfigName = "resolved_config.toml";

/// Runs one command. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tfa::cli
