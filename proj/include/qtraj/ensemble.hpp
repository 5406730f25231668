#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "qtraj/diffusion.hpp"
#include "qtraj/jump.hpp"
#include "qtraj/linalg.hpp"
#include "qtraj/many_body.hpp"
#include "qtraj/master.hpp"

namespace qtraj {

struct Observable {
  std::string name;
  Matrix op;  // Hermitian, full-space dimension
};

/// Per-trajectory reduction of a path to numbers at the sample times.
struct TrajectorySample {
  std::uint64_t index = 0;
  std::vector<std::pair<double, double>> events;  // (t, lambda)
  std::vector<std::vector<double>> observables;   // [observable][time]: <chi, X chi> or Tr(X rho)
  std::vector<double> norm2;                      // ||chi||^2 or Tr rho at each time
  std::vector<double> entropy;                    // density paths only
  std::vector<double> min_eigenvalue;             // density paths only
  double final_norm2 = 0.0;
  double max_permutation_defect = 0.0;
  double first_event_entropy = -1.0;  // -1 when no event occurred
};

struct SeriesStats {
  std::vector<double> mean;
  std::vector<double> se;
};

/// Sample means and standard errors (stddev / sqrt(n)), accumulated in index order.
struct EnsembleStats {
  int n_traj = 0;
  std::vector<double> times;
  std::vector<std::string> names;
  std::vector<SeriesStats> observables;
  SeriesStats norm2;
  SeriesStats entropy;
  double events_mean = 0.0;
  double events_se = 0.0;
  double min_eigenvalue = 0.0;  // smallest sampled eigenvalue over the ensemble (density paths)
  double max_permutation_defect = 0.0;
  double min_first_event_entropy = -1.0;
};

struct EnsembleRun {
  EnsembleStats stats;
  std::vector<TrajectorySample> samples;
};

/// Kahan-compensated mean and standard error of values in the given order.
std::pair<double, double> mean_and_se(const std::vector<double>& values);

/// Calls f(i) for i in [0, n) on up to `threads` workers. Errors are rethrown
/// for the smallest failing index, tagged with that index.
void parallel_for(int n, int threads, const std::function<void(int)>& f);

EnsembleStats aggregate(const std::vector<TrajectorySample>& samples, const std::vector<double>& times,
                        const std::vector<Observable>& observables);

EnsembleRun run_jump_ensemble(const JumpEngine& engine, const StateVector& eta, double t_final, int n_traj,
                              const std::vector<Observable>& observables, const std::vector<double>& sample_times,
                              int threads = 1);

EnsembleRun run_density_ensemble(const ManyBodySystem& system, const DensityMatrix& rho0, double t_final,
                                 JumpMode mode, int n_traj, const std::vector<Observable>& observables,
                                 const std::vector<double>& sample_times, int threads = 1);

enum class WaveEquation { diffusive, coupled };

EnsembleRun run_diffusive_sse_ensemble(const DiffusionEngine& engine, const StateVector& eta, double t_final,
                                       int n_traj, const std::vector<Observable>& observables,
                                       const std::vector<double>& sample_times, int threads = 1,
                                       WaveEquation equation = WaveEquation::diffusive);

EnsembleRun run_diffusive_density_ensemble(const DiffusionEngine& engine, const DensityMatrix& rho0, double t_final,
                                           int n_traj, const std::vector<Observable>& observables,
                                           const std::vector<double>& sample_times, int threads = 1,
                                           DensityPathOptions options = {});

struct ComparisonPoint {
  std::string observable;
  double t;
  double mc_mean;
  double mc_se;
  double reference;
  bool pass;
};

struct OracleComparison {
  std::vector<ComparisonPoint> points;
  double worst_ratio = 0.0;  // max |mean - reference| / se
  bool pass = false;
};

/// |mean - reference| <= n_sigma * se at every sample time and observable.
/// A 1e-12 absolute floor covers ensembles with zero spread.
OracleComparison compare_to_master(const EnsembleStats& stats, const MasterPath& master,
                                   const std::vector<Observable>& observables, double n_sigma = 3.0);

}  // namespace qtraj
