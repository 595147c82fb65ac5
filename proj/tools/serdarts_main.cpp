// SPDX-License-Identifier: Apache-2.0
#include "serdarts/cli/commands.hpp"

int main(int argc, char** argv) { return serdarts::cli::run_cli(argc, argv); }
