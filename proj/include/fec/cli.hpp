#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace fec::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kUsage = 2;

// Runs `fec <subcommand> ...`; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main_entry(int argc, const char* const* argv);

}  // namespace fec::cli
