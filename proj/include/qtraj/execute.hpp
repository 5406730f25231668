#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include "qtraj/ensemble.hpp"
#include "qtraj/error.hpp"
#include "qtraj/meter.hpp"
#include "qtraj/runspec.hpp"

namespace qtraj {

/// Operators and pointer resolved from a RunSpec preset.
struct Model {
  HermitianOperator h_single;
  HermitianOperator r;
  std::optional<Matrix> pair;
  int particles = 1;
  HermitianOperator h_full;
  std::shared_ptr<const PointerState> pointer;
};

Model build_model(const RunSpec& spec);
std::vector<Observable> resolve_observables(const RunSpec& spec, const Model& model);
StateVector initial_state(const RunSpec& spec);
/// 0, T/n, 2T/n, ..., T
std::vector<double> sample_times(const RunSpec& spec);

/// 2 for config and parse errors, 3 for numeric trouble, 4 for capacity.
int exit_code_for(ErrorKind kind);

/// Runs the experiment and writes manifest.json, data tables, trajectory
/// records and summary.json into spec.out. Returns the process exit status:
/// 0 on success, 1 when a requested oracle check fails, else exit_code_for.
int execute(const RunSpec& spec, std::ostream& log);

}  // namespace qtraj
