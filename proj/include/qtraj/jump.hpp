#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "qtraj/linalg.hpp"
#include "qtraj/meter.hpp"
#include "qtraj/rng.hpp"

namespace qtraj {

enum class JumpMode { linear, normalized };

struct JumpConfig {
  HermitianOperator h;
  std::shared_ptr<const MeterModel> meter;
  double nu = 0.0;  // jump intensity, 1/seconds
  double hbar = 1.0;
  std::uint64_t seed = 0;
  JumpMode mode = JumpMode::normalized;
};

struct JumpEvent {
  double t;
  double lambda;
  int grid_index = -1;  // -1 for externally supplied off-grid outcomes
};

struct Outcome {
  int index;
  double lambda;
};

/// One unravelling path. In linear mode `state` is the unnormalized chi(T)
/// and log_weight = ln ||chi(T)||^2; in normalized mode log_weight is 0.
struct Trajectory {
  std::vector<JumpEvent> events;
  double t_final = 0.0;
  StateVector state;
  double log_weight = 0.0;
  JumpMode mode = JumpMode::normalized;
  std::vector<double> sample_times;
  std::vector<StateVector> samples;  // chi(t_s), events with t < t_s applied
};

/// Homogeneous Poisson process on [0, T) by exponential gaps.
std::vector<double> sample_poisson_times(double nu, double t_final, Rng& rng);

/// Categorical draw from w_i ~ ||G(lambda_i) chi||^2 mu0_i by inverse CDF.
Outcome sample_outcome(const MeterModel& meter, const StateVector& chi, Rng& rng);

/// Exact piecewise propagation of the counting-driven wave equation. Holds the
/// H eigensystem and the change of basis between the R and H eigenbases; the
/// state is carried in R-eigenbasis coordinates where every G is diagonal.
class JumpEngine {
 public:
  explicit JumpEngine(JumpConfig config);

  const JumpConfig& config() const { return config_; }
  const MeterModel& meter() const { return *config_.meter; }
  int dim() const { return config_.h.dim(); }

  /// Random stream protocol: all event times first, then one uniform per event.
  Trajectory run(const StateVector& eta, double t_final, Rng& rng, std::span<const double> sample_times = {}) const;
  /// Trajectory `index` of the ensemble with stream (seed, index).
  Trajectory trajectory(const StateVector& eta, double t_final, std::uint64_t index,
                        std::span<const double> sample_times = {}) const;
  /// Stepwise propagation through a fixed event list, outcomes given.
  StateVector propagate_events(const StateVector& eta, std::span<const JumpEvent> events, double t_final) const;

  /// Eigenbasis coordinates <-> computational basis.
  Vector to_r_basis(const Vector& psi) const { return r_vectors_adj_ * psi; }
  Vector from_r_basis(const Vector& c) const { return config_.meter->r_eigen().vectors * c; }
  /// Free evolution of R-basis coordinates over dt.
  Vector evolve_free(const Vector& c, double dt) const;

 private:
  JumpConfig config_;
  Propagator free_;
  Matrix r_vectors_adj_;
  Matrix r_to_h_;  // V_H^dagger V_R
  Matrix h_to_r_;  // V_R^dagger V_H
  std::vector<double> cumulative_mu0_;
};

Trajectory evolve_jump(const JumpConfig& cfg, const StateVector& eta, double t_final, Rng& rng,
                       std::span<const double> sample_times = {});

struct ProductCheck {
  StateVector step_state;
  StateVector product_state;
  double deviation;
};

/// chi(T) by the stepwise integrator and by the explicit chronological product
/// U(T - t_n) G(lambda_n) ... U(t_2 - t_1) G(lambda_1) U(t_1) eta.
ProductCheck trajectory_product_check(const JumpConfig& cfg, std::span<const JumpEvent> events,
                                      const StateVector& eta, double t_final);

/// Index of the first cumulative weight exceeding u * total.
int inverse_cdf(std::span<const double> cumulative, double u);

}  // namespace qtraj
