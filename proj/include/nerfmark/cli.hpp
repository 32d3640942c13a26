// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace nerfmark {

// Command-line entry point. Returns the process exit code: 0 on success,
// nonzero with a one-line "error: ..." diagnostic on stderr otherwise.
int run_cli(int argc, char** argv);

}  // namespace nerfmark
