#pragma once

#include <ostream>

namespace sadda {

/// Exit codes shared by every command.
enum ExitCode : int {
  kExitOk = 0,
  kExitVerificationFailed = 1,
  kExitUsage = 2,
  kExitRuntimeFault = 3,
};

/// `sadda <pretrain|adapt|eval|export-embeddings|gradcheck> --config <path>
/// [--out <dir>] [--seed <u64>]`. Diagnostics go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sadda
