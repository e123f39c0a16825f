// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resora authors

#include <iostream>

#include "resora/cli.hpp"

int main(int argc, char** argv) { return resora::run_cli(argc, argv, std::cout, std::cerr); }
