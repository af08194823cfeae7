#pragma once

#include <string>
#include <vector>

namespace dcno {

// "1,3,9" -> {1, 3, 9}. Throws std::invalid_argument on empty input,
// non-integer tokens, or non-positive values.
std::vector<int> parse_dilations(const std::string& text);

// Everything behind main(): parses argv, dispatches the subcommand, and maps
// failures to the process exit code. 0 = success, 1 = usage error (unknown
// flag, missing subcommand, bad flag value; usage text goes to stderr),
// 2 = runtime error (IO failures, solver failures, checkpoint/config
// mismatches; one-line message goes to stderr).
int cli_main(int argc, const char* const* argv);

}  // namespace dcno
