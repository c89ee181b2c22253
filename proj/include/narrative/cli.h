#ifndef NARRATIVE_CLI_H_
#define NARRATIVE_CLI_H_

#include <iosfwd>

namespace narrative {

// Exit codes of the command-line tool.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace narrative

#endif  // NARRATIVE_CLI_H_
