// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace freqnet {

/// Exit codes: 0 success, 1 runtime failure, 2 invalid input or config,
/// 3 selfcheck failure.
int run_cli(int argc, char** argv);

}  // namespace freqnet
