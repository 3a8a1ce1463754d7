#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace jacprobe::cli {

// args[0] is the program name, args[1] the subcommand. Returns 0 on success,
// 1 on a domain error (error JSON written to `err`), 2 on a usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, const char* const* argv);

} // namespace jacprobe::cli
