// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <string>
#include <vector>

namespace introspect {

// Exit codes: 0 success, 1 computation error, 2 usage or input error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitComputation = 1;
inline constexpr int kExitUsage = 2;

int run_cli(int argc, const char* const* argv);
// args excludes the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace introspect
