#pragma once

// The amc command line. run_cli is the whole program minus process setup,
// so tests can drive it in-process.

#include <iosfwd>
#include <string>
#include <vector>

namespace amc::cli {

enum ExitCode : int {
  ok = 0,
  failure = 1,
  usage_error = 2,
  dataset_error = 3,
  numerical_error = 4,
  dimension_error = 5,
};

/// `args` excludes the program name. Results go to `out`, logs to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace amc::cli
