// SPDX-License-Identifier: Apache-2.0
#include "nerfmark/cli.hpp"

int main(int argc, char** argv) { return nerfmark::run_cli(argc, argv); }
