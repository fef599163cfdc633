#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mmt::cli {

/// Runs one `mmt` subcommand. Returns 0 on success, 1 on a usage error and
/// 2 when the workflow itself fails.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace mmt::cli
