// One line per acceptance criterion; exit status 1 if any criterion fails.
#include <iostream>
#include <string>

#include "qtraj/acceptance.hpp"

int main(int argc, char** argv) {
  qtraj::AcceptanceOptions opts;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--threads") opts.threads = std::stoi(argv[i + 1]);
  int failed = 0;
  for (const auto& r : qtraj::run_acceptance(opts, std::cout))
    if (!r.pass) ++failed;
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
