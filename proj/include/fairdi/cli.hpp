#pragma once

#include <filesystem>
#include <ostream>

namespace fairdi {

// Output root used when a subcommand gets no --out: $FAIRDI_OUTPUT_ROOT, else "fairdi-out".
std::filesystem::path default_output_root();

// Runs one subcommand (generate, train, evaluate, stats, report) and returns
// the process exit code: 0 when every requested artifact was written.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fairdi
