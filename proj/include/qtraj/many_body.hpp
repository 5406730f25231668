#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "qtraj/jump.hpp"
#include "qtraj/linalg.hpp"
#include "qtraj/meter.hpp"
#include "qtraj/rng.hpp"

namespace qtraj {

enum class Sector { full_tensor, symmetric };

struct ManyBodyConfig {
  int particles = 1;
  HermitianOperator h_single;
  std::optional<Matrix> pair_interaction;  // W on d^2, applied to every pair k < l
  std::shared_ptr<const MeterModel> meter;  // single-particle R, kappa, f0
  double nu = 0.0;                          // per-particle intensity; merged process runs at M nu
  double hbar = 1.0;
  std::uint64_t seed = 0;
  Sector sector = Sector::full_tensor;
};

/// W_{(s,t),(s,t)} = coupling when |s - t| = 1, zero elsewhere.
Matrix nearest_neighbor_coupling(int d, double coupling);

/// H^M = sum_k H(k) + sum_{k<l} W(k,l).
Matrix many_body_hamiltonian(const ManyBodyConfig& cfg);

struct DensityEvent {
  double t;
  double lambda;
  int grid_index;
};

struct DensityTrajectory {
  std::vector<DensityEvent> events;
  DensityMatrix rho;  // computational basis
  double log_weight = 0.0;
  JumpMode mode = JumpMode::normalized;
  std::vector<double> sample_times;
  std::vector<Matrix> samples;
  std::vector<double> traces;
  std::vector<double> entropy_series;
  std::vector<double> min_eigenvalues;
  std::vector<double> permutation_defects;
  std::optional<double> first_event_entropy;
};

/// Precomputed M-particle system. Internally the density matrix is carried in
/// the product R-eigenbasis, where every G(k, lambda) and E(lambda) is diagonal.
class ManyBodySystem {
 public:
  explicit ManyBodySystem(ManyBodyConfig config);

  const ManyBodyConfig& config() const { return config_; }
  const MeterModel& meter() const { return *config_.meter; }
  int particles() const { return config_.particles; }
  int single_dim() const { return meter().dim(); }
  int dim() const { return dim_; }
  const HermitianOperator& hamiltonian() const { return hamiltonian_; }
  /// Applies the sector choice to an initial state (symmetric projection + renormalization).
  DensityMatrix prepare(const DensityMatrix& rho0) const;

  /// Diagonal of E(lambda_i) = (1/M) sum_k G^dagger(k) G(k) in the product R-eigenbasis.
  double effect_diagonal(int i, int a) const { return effect_(i, a); }

  DensityTrajectory run(const DensityMatrix& rho0, double t_final, JumpMode mode, Rng& rng,
                        std::span<const double> sample_times = {}) const;
  DensityTrajectory trajectory(const DensityMatrix& rho0, double t_final, JumpMode mode, std::uint64_t index,
                               std::span<const double> sample_times = {}) const;

  /// Engine path of one mixing reduction at grid point i (product-basis Hadamard form), computational basis in and out.
  Matrix mixing_step(const Matrix& rho, int grid_index) const;

  Matrix to_product_basis(const Matrix& rho) const { return basis_.adjoint() * rho * basis_; }
  Matrix from_product_basis(const Matrix& rho) const { return basis_ * rho * basis_.adjoint(); }

 private:
  Matrix evolve_free(const Matrix& rho, double dt) const;
  void apply_mixing(Matrix& rho, int grid_index) const;

  ManyBodyConfig config_;
  int dim_;
  HermitianOperator hamiltonian_;
  Propagator free_;
  Matrix basis_;    // V_R^{(x)M}
  Matrix h_to_r_;   // basis^dagger V_H
  std::vector<std::vector<int>> digits_;
  Eigen::MatrixXd effect_;
  std::vector<double> cumulative_mu0_;
};

/// (1/M) sum_k G(k, lambda) rho G(k, lambda)^dagger in the computational basis.
DensityMatrix mixing_reduction(const ManyBodySystem& sys, const DensityMatrix& rho, double lambda);

/// Explicit average over all M^n hidden particle-label sequences; n <= 6.
DensityMatrix mixing_brute_force_oracle(const ManyBodySystem& sys, const DensityMatrix& rho,
                                        std::span<const double> lambdas);

/// max over transpositions of ||P rho P^dagger - rho||_max.
double permutation_symmetry_check(const Matrix& rho, int particles, int d);

DensityTrajectory evolve_density(const ManyBodySystem& sys, const DensityMatrix& rho0, double t_final, JumpMode mode,
                                 Rng& rng, std::span<const double> sample_times = {});

}  // namespace qtraj
