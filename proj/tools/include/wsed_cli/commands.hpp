// SPDX-License-Identifier: Apache-2.0
//
// The `wsed` command line: synth, train, eval, ablate, visualize, gradcheck.
#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "wsed/train.hpp"

namespace wsed::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

/// Parses `args` (args[0] is the program name), runs the subcommand and
/// returns the process exit code. Errors are reported on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Epoch history stored in checkpoints written by `train`, so a resumed run
/// reproduces the full report stream.
std::string encode_history(const std::vector<EpochReport>& reports, bool with_wall_time);
std::vector<EpochReport> decode_history(const std::string& text);

/// `epoch,val_recon_mse`
std::string val_recon_csv(const std::vector<EpochReport>& reports);

/// Largest absolute change of any parameter whose name starts with `prefix`
/// between `ckpt` and a freshly initialized model of the same configuration.
double max_parameter_drift(const Checkpoint& ckpt, const std::string& prefix);

}  // namespace wsed::cli
