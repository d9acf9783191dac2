// Copyright 2026 The lb2 Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) { return lb2::cli::run(argc, argv, std::cout, std::cerr); }
