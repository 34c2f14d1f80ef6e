// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <string>
#include <vector>

#include "specsurg/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return specsurg::cli::run_cli(args, std::cout, std::cerr);
}
