#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "qtraj/linalg.hpp"

namespace qtraj {

/// Closed-form pointer f0(x) = scale * exp(-pi x^2 / 2) * exp(i a x).
struct GaussianShape {
  double scale = 1.0;
  double modulation = 0.0;  // a
  Complex value(double x) const;
  Complex derivative(double x) const;
  Complex second_derivative(double x) const;
};

/// Meter wave function f0 sampled on a strictly increasing grid (dimensionless
/// pointer units) with trapezoidal quadrature weights. Unit quadrature norm.
class PointerState {
 public:
  PointerState(std::vector<double> grid, std::vector<Complex> values,
               std::optional<GaussianShape> analytic = std::nullopt);

  /// Rescales `values` to unit quadrature norm before constructing.
  static PointerState from_table(std::vector<double> grid, std::vector<Complex> values);

  int size() const { return static_cast<int>(grid_.size()); }
  const std::vector<double>& grid() const { return grid_; }
  const std::vector<Complex>& values() const { return values_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::optional<GaussianShape>& analytic() const { return analytic_; }
  bool is_real() const;
  double half_width() const { return std::min(-grid_.front(), grid_.back()); }
  double quadrature_norm2() const;

  /// f0 at an arbitrary point: closed form when tagged, otherwise local
  /// quintic Lagrange interpolation; zero outside the tabulated range.
  Complex value_at(double x) const;
  /// f0' and f0'' on the grid: closed form when tagged, else second-order finite differences.
  std::vector<Complex> derivative() const;
  std::vector<Complex> second_derivative() const;

 private:
  std::vector<double> grid_;
  std::vector<Complex> values_;
  std::vector<double> weights_;
  std::optional<GaussianShape> analytic_;
};

/// exp(-pi x^2/2) * exp(i a x) on n uniform points over [-L, L], renormalized to unit quadrature norm.
PointerState gaussian_pointer(int n, double half_width, double modulation = 0.0);

/// Text table, one row per grid point: "lambda re [im]". Lines starting with '#' are ignored.
PointerState load_pointer_table(const std::filesystem::path& path);
void save_pointer_table(const PointerState& pointer, const std::filesystem::path& path);

struct MeterOptions {
  // grid points with |f0| below this are excluded. Small enough that the shifted
  // packets f0(lambda - kappa r) lose no mass, large enough that g^2 stays finite.
  double support_threshold = 1e-150;
  double coverage_base = 6.0;        // L0 in the rule L >= L0 + kappa max|spec R|
  bool enforce_coverage = true;
};

/// Single meter coupled through kappa R. Caches R's eigensystem and the
/// reduction table g(i,k) = f0(lambda_i - kappa r_k) / f0(lambda_i), so every
/// G(lambda_i) is diagonal in the R eigenbasis.
class MeterModel {
 public:
  MeterModel(double kappa, HermitianOperator r, PointerState pointer, MeterOptions options = {});

  double kappa() const { return kappa_; }
  const HermitianOperator& r() const { return r_; }
  const PointerState& pointer() const { return pointer_; }
  const EigenSystem& r_eigen() const { return r_eig_; }
  int dim() const { return r_.dim(); }
  int grid_size() const { return pointer_.size(); }
  double lambda(int i) const { return pointer_.grid()[i]; }
  double spectral_radius() const;

  bool on_support(int i) const { return weights_[i] > 0.0; }
  /// Input measure mu0 on the grid: |f0|^2 d(lambda), zero off support, renormalized to sum 1.
  const std::vector<double>& outcome_weights() const { return weights_; }
  /// N x d table of eigenvalue factors of G(lambda_i).
  const Matrix& reduction_table() const { return table_; }

  /// F(lambda) = f0(lambda I - kappa R).
  Matrix localizer(double lambda) const;
  /// G(lambda) = F(lambda) / f0(lambda).
  Matrix reduction(double lambda) const;
  Matrix reduction_at(int i) const;
  /// Eigenvalues of G(lambda) in R-eigenbasis order, for any in-range lambda on the support.
  Vector reduction_factors(double lambda) const;

  /// p(lambda_i) = ||G(lambda_i) eta||^2 |f0(lambda_i)|^2 on every grid point.
  std::vector<double> output_density(const StateVector& eta) const;
  StateVector posterior_state(const StateVector& eta, double lambda) const;

  /// Sum_i G_i^dagger G_i mu0_i over the support.
  Matrix povm_sum() const;
  double povm_defect() const;

  /// Index of the grid point equal to lambda (to 1e-12 relative), or -1.
  int grid_index(double lambda) const;
  void check_in_range(double lambda) const;

 private:
  double kappa_;
  HermitianOperator r_;
  PointerState pointer_;
  MeterOptions options_;
  EigenSystem r_eig_;
  std::vector<double> weights_;
  Matrix table_;
};

/// exp{pi kappa R (lambda I - kappa R / 2)} by Pade matrix exponential; an
/// evaluation path independent of the functional calculus used by MeterModel.
Matrix gaussian_reduction_closed_form(const HermitianOperator& r, double kappa, double lambda);

struct SharpProjection {
  double y;   // cell label, a multiple of kappa
  Matrix projector;
};

/// Spectral projectors of R onto the cells [y, y + kappa), y in kappa*Z, ascending in y.
std::vector<SharpProjection> sharp_projections(const HermitianOperator& r, double kappa);

/// U(t) G(lambda) U(-t0) eta, or U(t - t0) eta when no kick is recorded.
StateVector single_kick_evolve(const MeterModel& meter, const HermitianOperator& h, const StateVector& eta,
                               double t0, double t, std::optional<double> lambda, double hbar = 1.0);

/// psi(k, i) = f0(lambda_i - kappa r_k) eta_k with eta_k the R-eigenbasis
/// coefficients of eta; rows index R eigenvectors, columns the grid.
Matrix joint_single_kick(const MeterModel& meter, const StateVector& eta);

/// L' = -f0'/f0 and L'' = f0''/f0 on the grid; zero off support.
struct OsmoticTables {
  std::vector<Complex> first;
  std::vector<Complex> second;
};
OsmoticTables osmotic_tables(const PointerState& pointer, double support_threshold = 1e-12);

/// Gaussian pointer sized by the coverage rule for (R, kappa).
MeterModel make_gaussian_meter(double kappa, const HermitianOperator& r, int grid_points = 1024,
                               double modulation = 0.0);

}  // namespace qtraj
