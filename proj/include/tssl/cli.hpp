#pragma once

namespace tssl::cli {

// Full command-line driver (synth / train / eval / pseudo / plot). Separated
// from main() so tests can exercise argument handling and exit codes
// in-process. Returns the process exit code; never throws.
int run(int argc, const char* const* argv);

}  // namespace tssl::cli
