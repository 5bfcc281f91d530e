// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tsm {

// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,  // invariant violation, failed gradient check, I/O
  kExitUsage = 2,    // bad flags, config or checkpoint
  kExitDivergence = 3,
  kExitStageMismatch = 4,
};

// Entry point behind the `tsm` binary. Diagnostics go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

// CSV field with RFC 4180 quoting, and the number format used for every
// numeric CSV cell.
std::string csv_field(const std::string& s);
std::string csv_number(double v);

}  // namespace tsm
