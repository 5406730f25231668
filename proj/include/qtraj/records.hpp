#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qtraj/ensemble.hpp"

namespace qtraj {

/// %.17g, round-trip exact for doubles.
std::string format_double(double x);

/// "# spec_hash=<hash> seed=<seed>"
std::string header_line(const std::string& hash, std::uint64_t seed);

/// Tab-delimited table with the header line, a column-name line and one row per entry.
void write_table(const std::filesystem::path& path, const std::string& hash, std::uint64_t seed,
                 const std::vector<std::string>& columns, const std::vector<std::vector<double>>& rows);

/// Ensemble means and standard errors per sample time.
void write_ensemble_table(const std::filesystem::path& path, const std::string& hash, std::uint64_t seed,
                          const EnsembleStats& stats);

/// One JSON object per line: a header object, then per trajectory
/// {index, seed, events: [[t, lambda], ...], final_norm2, observables: {name: [...]}}
/// and, for density paths, trace / entropy / min_eigenvalue series.
void write_trajectory_records(const std::filesystem::path& path, const std::string& hash, std::uint64_t seed,
                              const std::vector<double>& times, const std::vector<std::string>& names,
                              const std::vector<TrajectorySample>& samples);

/// Parsed form of one trajectory record line.
struct TrajectoryRecord {
  std::uint64_t index = 0;
  std::uint64_t seed = 0;
  std::vector<std::pair<double, double>> events;
  double final_norm2 = 0.0;
  std::vector<std::pair<std::string, std::vector<double>>> observables;
};

TrajectoryRecord parse_trajectory_record(const std::string& line);

}  // namespace qtraj
