#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace qtraj {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
  double budget_seconds = 0.0;  // 0 means no runtime bound
};

struct AcceptanceOptions {
  int threads = 1;
  std::filesystem::path scratch = std::filesystem::temp_directory_path() / "qtraj-acceptance";
};

constexpr int kCriterionCount = 11;

/// Runs one criterion (1..11). Seeds are fixed per criterion.
CriterionResult run_criterion(int id, const AcceptanceOptions& options);
/// Runs all criteria, printing one line per criterion to `out` as each finishes.
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options, std::ostream& out);
std::string format_result(const CriterionResult& r);

}  // namespace qtraj
