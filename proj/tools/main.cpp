#include "amc/kernels.hpp"
#include "cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
  amc::kernels::retain_freed_memory();
  std::vector<std::string> args(argv + 1, argv + argc);
  return amc::cli::run_cli(args, std::cout, std::cerr);
}
