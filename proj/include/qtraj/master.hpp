#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "qtraj/diffusion.hpp"
#include "qtraj/linalg.hpp"
#include "qtraj/meter.hpp"

namespace qtraj {

enum class MasterMode { jump_averaged, diffusive };

struct MasterConfig {
  HermitianOperator h;  // full space, dimension d^M
  std::shared_ptr<const MeterModel> meter;      // jump mode; also supplies R
  HermitianOperator r;                          // single-particle R for diffusive mode without a meter
  std::shared_ptr<const PointerState> pointer;  // diffusive mode; defaults to the meter's pointer
  int particles = 1;
  double nu = 0.0;
  double gamma = 0.0;
  double hbar = 1.0;
  MasterMode mode = MasterMode::jump_averaged;
};

/// Reference right-hand sides, written out term by term with embedded operators.
///   jump:      -(i/hbar)[H, rho] + nu sum_k (sum_i G_i(k) rho G_i(k)^dagger mu0_i - rho)
///   diffusive: -(i/hbar)[H, rho] + (gamma/hbar)^2 sigma^2 sum_k (R(k) rho R(k) - {R(k)^2, rho}/2)
Matrix jump_master_step(const MasterConfig& cfg, const Matrix& rho);
Matrix diffusive_master_step(const MasterConfig& cfg, const Matrix& rho);

/// Linear map on density matrices. It acts in a working basis (the product
/// R-eigenbasis for the built-in generators) where dissipators are diagonal.
class Generator {
 public:
  using Map = std::function<Matrix(const Matrix&)>;

  Generator() = default;
  Generator(int dim, Map working, Matrix basis);
  static Generator from_function(int dim, Map map);

  int dim() const { return dim_; }
  const Matrix& basis() const { return basis_; }
  Matrix apply(const Matrix& rho) const;
  Matrix apply_working(const Matrix& rho_working) const { return working_(rho_working); }
  Matrix to_working(const Matrix& rho) const;
  Matrix from_working(const Matrix& rho_working) const;
  /// D^2 x D^2 matrix of the map in working coordinates, column index a + D b for |a><b|.
  Matrix superoperator() const;
  /// Operator 2-norm of the superoperator (computed once).
  double norm() const;

 private:
  int dim_ = 0;
  Map working_;
  Matrix basis_;
  mutable std::optional<double> norm_;
};

/// Fast form of the averaged generators: commutator plus a Hadamard multiplier
/// in the product R-eigenbasis.
Generator make_generator(const MasterConfig& cfg);
/// -(i/hbar)[H, .] alone.
Generator unitary_generator(const HermitianOperator& h, double hbar = 1.0);

struct MasterPath {
  std::vector<double> times;
  std::vector<Matrix> rhos;
};

constexpr double kStabilityBound = 0.1;

/// Classical RK4 with Hermitian symmetrization after every step. Requires
/// dt * norm(generator) <= 0.1 and T an integer multiple of dt.
MasterPath rk4_solve(const Generator& gen, const Matrix& rho0, double t_final, double dt,
                     std::span<const double> sample_times = {});
/// Largest dt <= dt_max that divides T and satisfies the stability bound.
double stable_step(const Generator& gen, double t_final, double dt_max);

struct BridgeRow {
  double nu;
  double kappa;
  double generator_error;  // max-entry superoperator difference over max-entry of the diffusive dissipator
  double solution_error;   // max |rho_jump(T) - rho_diff(T)| over max |rho_diff(T)|
};

struct BridgeReport {
  std::vector<BridgeRow> rows;
  bool monotone = false;
  double tolerance = 5e-2;
  bool pass = false;
};

/// Jump models with kappa = gamma / sqrt(nu) against the diffusive master of the
/// base configuration. Uses base.pointer, base.h, base.r, base.gamma and base.particles.
BridgeReport jump_to_diffusion_bridge(const DiffusionConfig& base, std::span<const double> nus, double t_final = 1.0,
                                      double tolerance = 5e-2, const MeterOptions& meter_options = {});

struct MeanFieldRow {
  double nu;
  double kappa;
  double generator_error;  // relative to the superoperator of -(i/hbar)[H - gamma q0 R, .]
  double solution_error;   // max |rho_jump(T) - |psi_mf(T)><psi_mf(T)||
};

struct MeanFieldReport {
  double q0 = 0.0;
  std::vector<MeanFieldRow> rows;
  double tolerance = 5e-2;
  bool pass = false;
};

/// Jump master with kappa = gamma / nu against mean_field_evolve.
MeanFieldReport mean_field_check(const DiffusionConfig& base, const StateVector& eta, std::span<const double> nus,
                                 double t_final = 1.0, double tolerance = 5e-2,
                                 const MeterOptions& meter_options = {});

}  // namespace qtraj
