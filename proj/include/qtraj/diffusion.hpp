#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "qtraj/linalg.hpp"
#include "qtraj/meter.hpp"
#include "qtraj/rng.hpp"

namespace qtraj {

/// Second moments of the reduction noise and pointer statistics:
/// c1 = (f0, L'L' f0), c2 = (f0, L'^dagger L' f0) = sigma^2 / hbar^2,
/// q0 = (f0, i hbar d f0), sigma^2 = hbar^2 (d f0, d f0).
struct NoiseCovariance {
  Complex c1;
  double c2;
  double q0;
  double sigma2;
};

NoiseCovariance noise_covariance(const PointerState& pointer, double hbar = 1.0);

/// Complex Gaussian increments with E[dv dv] = c1 dt and E[dv* dv] = c2 dt.
/// Real when c1 == c2.
class WienerIncrements {
 public:
  WienerIncrements() = default;
  WienerIncrements(Complex c1, double c2);

  bool is_real() const { return real_; }
  Complex draw(Rng& rng, double dt) const;

 private:
  bool real_ = true;
  double c2_ = 0.0;
  // lower Cholesky factor of the (re, im) covariance per unit time
  double l11_ = 0.0, l21_ = 0.0, l22_ = 0.0;
};

struct DiffusionConfig {
  HermitianOperator h;  // single-particle
  HermitianOperator r;
  double gamma = 0.0;
  double hbar = 1.0;
  std::shared_ptr<const PointerState> pointer;
  double dt = 1e-3;
  std::uint64_t seed = 0;
  int particles = 1;
  std::optional<Matrix> pair_interaction;
};

struct StatePath {
  std::vector<double> times;
  std::vector<StateVector> states;
  std::vector<double> norm2;
};

enum class DensityScheme {
  /// Kraus-form first-order step: A rho A^dagger plus a pairwise dephasing
  /// remainder. Positive semidefinite by construction.
  positive,
  /// Plain Euler-Maruyama on the linear equation, followed by Hermitian symmetrization.
  euler_maruyama
};

struct DensityPathOptions {
  bool noise = true;  // false integrates the noise-averaged drift only
  DensityScheme scheme = DensityScheme::positive;
};

struct DensityPath {
  std::vector<double> times;
  std::vector<Matrix> rhos;
  std::vector<double> traces;
  std::vector<double> min_eigenvalues;
};

/// Precomputed diffusive-limit model. Operators are diagonalized once; every
/// step works in R-eigenbasis coordinates (product basis for M particles) with
/// the free evolution exp(-i H dt / hbar) applied exactly.
class DiffusionEngine {
 public:
  explicit DiffusionEngine(DiffusionConfig config);

  const DiffusionConfig& config() const { return config_; }
  const NoiseCovariance& covariance() const { return cov_; }
  int single_dim() const { return config_.r.dim(); }
  int dim() const { return dim_; }
  int steps_for(double t_final) const;
  const HermitianOperator& hamiltonian() const { return hamiltonian_; }

  /// Linear diffusive reduction equation d chi + K chi dt = gamma R chi dv.
  StatePath diffusive_sse(const StateVector& eta, double t_final, Rng& rng, std::span<const double> sample_times) const;
  /// Coupled-system equation d psi + K psi dt = (i/hbar) gamma R psi du with real u, Var(du) = sigma^2 dt.
  StatePath coupled_sse(const StateVector& eta, double t_final, Rng& rng, std::span<const double> sample_times) const;
  /// M-particle diffusive density equation driven by w with the table of sqrt(M) v.
  DensityPath diffusive_density(const DensityMatrix& rho0, double t_final, Rng& rng,
                                std::span<const double> sample_times, DensityPathOptions options = {}) const;

 private:
  std::vector<long long> sample_steps(double t_final, std::span<const double> sample_times) const;

  DiffusionConfig config_;
  NoiseCovariance cov_;
  WienerIncrements v_noise_;
  WienerIncrements w_noise_;
  int dim_;
  HermitianOperator hamiltonian_;
  EigenSystem r_eig_;
  Matrix step_single_;  // exp(-i H dt/hbar) in R-eigenbasis coordinates
  Matrix basis_;        // product R-eigenbasis
  Matrix step_many_;    // exp(-i H^M dt/hbar) in product coordinates
  RealVector r_mean_;   // diagonal of (1/M) sum_k R(k)
  RealVector r_square_sum_;  // diagonal of sum_k R(k)^2
  Eigen::MatrixXd r_cross_;  // sum_k r_{a_k} r_{b_k}
  Eigen::MatrixXd pair_dephasing_;  // sum_{k<l} (r_{a_k} - r_{a_l})(r_{b_k} - r_{b_l})
};

StatePath evolve_diffusive_sse(const DiffusionConfig& cfg, const StateVector& eta, double t_final, Rng& rng,
                               std::span<const double> sample_times = {});
StatePath evolve_coupled_sse(const DiffusionConfig& cfg, const StateVector& eta, double t_final, Rng& rng,
                             std::span<const double> sample_times = {});
DensityPath evolve_diffusive_density(const DiffusionConfig& cfg, const DensityMatrix& rho0, double t_final, Rng& rng,
                                     std::span<const double> sample_times = {}, DensityPathOptions options = {});

/// Deterministic unitary evolution under H - gamma q0 R.
StatePath mean_field_evolve(const DiffusionConfig& cfg, const StateVector& eta, double t_final,
                            std::span<const double> sample_times = {});

}  // namespace qtraj
