// SPDX-License-Identifier: Apache-2.0
#include "ospmv/cli.hpp"

int main(int argc, char** argv) { return ospmv::cli_main(argc, argv); }
