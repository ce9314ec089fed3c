#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace coevnet {

/// Entry point of the `coevnet` tool. Subcommands: generate, fit, eval,
/// build-senate, compare. Returns 0 on success, 2 on usage errors and 1 on
/// runtime failures; failures print {"error": ..., "kind": ...} to `err`.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

}  // namespace coevnet
