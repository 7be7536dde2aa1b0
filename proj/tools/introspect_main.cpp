// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

#include "introspect/cli.hpp"

int main(int argc, char** argv) { return introspect::run_cli(argc, argv); }
