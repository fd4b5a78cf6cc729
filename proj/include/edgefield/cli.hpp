#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace edgefield {

// Runs one subcommand (`graph build`, `prior simulate`, `study synth`,
// `study replicate`, `fit`, `compare`, `render`). Returns 0 on success, 2 on
// invalid input or usage, 1 on runtime failure.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace edgefield
