// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0

#include "pgen/cli.hpp"

int main(int argc, char** argv) { return pgen::run_cli(argc, argv); }
