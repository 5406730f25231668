#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qtraj/linalg.hpp"

namespace qtraj {

struct ObservableSpec {
  std::string name;            // "R", "H", "projector:k", "coherence:j:k", or a label for `matrix`
  std::optional<Matrix> matrix;
};

/// Batch run description. Field names match the JSON keys (see README).
struct RunSpec {
  std::string experiment = "jump";  // single-kick | jump | many-body | diffusion | master | bridge
  std::string preset = "two-level";  // two-level | lattice-particle | two-atoms | custom

  // model
  int d = 2;
  double hopping = 1.0;
  std::optional<Matrix> h;  // custom preset
  std::optional<Matrix> r;
  int particles = 1;
  double pair_coupling = 0.0;
  double kappa = 0.3;
  double nu = 5.0;
  double gamma = 1.0;
  double hbar = 1.0;
  int grid_points = 1024;
  double modulation = 0.0;
  std::string pointer_table;  // optional path, replaces the Gaussian pointer
  std::string mode = "normalized";  // jump / many-body: normalized | linear
  std::string sector = "full";      // many-body: full | symmetric
  double dt = 1e-3;
  std::string scheme = "positive";  // diffusion density: positive | euler-maruyama
  std::string equation = "density";  // diffusion: sse | coupled | density
  std::string master_mode = "jump";  // master: jump | diffusive

  // initial state: "uniform", "basis:k", or explicit amplitudes
  std::string initial_state = "uniform";
  std::optional<Vector> initial_amplitudes;

  double t_final = 1.0;
  int n_samples = 10;  // sample times 0, T/n, 2T/n, ..., T
  std::vector<ObservableSpec> observables{{"R", std::nullopt}};

  std::uint64_t seed = 1;
  int n_traj = 100;
  int threads = 1;
  std::string out = "out";
  bool compare = true;  // run the averaged-equation oracle next to ensembles
  bool records = true;  // write per-trajectory records

  std::vector<double> kick_lambdas{-0.5, 0.0, 0.5};
  double kick_t0 = 0.0;
  double kick_t = 1.0;

  std::vector<double> bridge_nus{1e2, 1e3, 1e4};
  double bridge_tolerance = 5e-2;
};

RunSpec parse_runspec(const std::string& text);
RunSpec load_runspec(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const RunSpec& spec);
std::string dump_runspec(const RunSpec& spec);
/// Checks ranges and cross-field constraints; throws a validation error naming the field.
void validate_runspec(const RunSpec& spec);
/// FNV-1a over the resolved spec, ignoring `threads` and `out`.
std::string spec_hash(const RunSpec& spec);

/// Canonical experiment name for a CLI subcommand (kick, jump, many, diffuse, master, bridge).
std::string experiment_for_command(const std::string& command);

}  // namespace qtraj
