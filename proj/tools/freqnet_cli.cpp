// SPDX-License-Identifier: Apache-2.0
#include "freqnet/cli.hpp"

int main(int argc, char** argv) { return freqnet::run_cli(argc, argv); }
