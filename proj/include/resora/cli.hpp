// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resora authors

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

namespace resora {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Environment variable naming the default output root.
inline constexpr const char* kOutputRootEnv = "RESORA_OUTPUT_ROOT";
inline constexpr const char* kDefaultOutputRoot = "resora_runs";

// Output directory for a run: `explicit_dir` if given; otherwise `config_dir`
// (absolute, or relative to the output root); otherwise root / fallback_name.
std::filesystem::path resolve_output_dir(const std::string& explicit_dir,
                                         const std::string& config_dir,
                                         const std::string& fallback_name);

// Entry point for the resora tool. Subcommands: grad-check, reg-eval, train,
// analyze, sweep. Returns kExitOk, kExitFailure or kExitUsage.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace resora
