#pragma once

#include <complex>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qtraj/error.hpp"

namespace qtraj {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

inline constexpr Complex kI{0.0, 1.0};
inline constexpr double kPi = 3.14159265358979323846;

/// Complex amplitude vector over a finite-dimensional Hilbert space.
/// Entries are always finite; the norm is not constrained unless asked for.
class StateVector {
 public:
  StateVector() = default;
  explicit StateVector(Vector amps);

  static StateVector basis(int dim, int k);
  static StateVector from(std::initializer_list<Complex> amps);

  int dim() const { return static_cast<int>(amps_.size()); }
  const Vector& amps() const { return amps_; }
  Complex operator[](int i) const { return amps_(i); }
  double norm2() const { return amps_.squaredNorm(); }
  bool is_normalized(double tol = 1e-12) const;
  StateVector normalized() const;

 private:
  Vector amps_;
};

/// Square complex matrix with max|A - A^dagger| <= 1e-12 entrywise.
class HermitianOperator {
 public:
  HermitianOperator() = default;
  explicit HermitianOperator(Matrix entries, double tol = 1e-12);

  static HermitianOperator diagonal(std::span<const double> values);
  static HermitianOperator zero(int dim);
  static HermitianOperator identity(int dim);
  /// (A + A^dagger)/2 without validation; for operators that are Hermitian up to rounding.
  static HermitianOperator hermitized(const Matrix& a);

  int dim() const { return static_cast<int>(m_.rows()); }
  const Matrix& matrix() const { return m_; }

 private:
  Matrix m_;
};

/// Hermitian positive semidefinite matrix with real nonnegative trace.
class DensityMatrix {
 public:
  DensityMatrix() = default;
  /// Validating constructor: Hermitian to 1e-12, eigenvalues >= -1e-10, trace >= 0.
  explicit DensityMatrix(Matrix entries);

  static DensityMatrix pure(const StateVector& psi);
  /// Hermitizes but skips the eigenvalue check. Used on engine outputs whose
  /// positivity follows from construction and is monitored separately.
  static DensityMatrix trusted(const Matrix& entries);

  int dim() const { return static_cast<int>(m_.rows()); }
  const Matrix& matrix() const { return m_; }
  double trace() const { return m_.trace().real(); }
  double min_eigenvalue() const;
  DensityMatrix normalized() const;

 private:
  Matrix m_;
};

double max_abs(const Matrix& a);
double hermiticity_defect(const Matrix& a);
Matrix hermitize(const Matrix& a);
double expectation(const Matrix& x, const Matrix& rho);
double expectation(const Matrix& x, const Vector& psi);

struct EigenSystem {
  RealVector values;  // ascending
  Matrix vectors;     // columns are eigenvectors
};

/// Hermitian eigendecomposition; throws a validation error naming the asymmetry.
EigenSystem hermitian_eig(const Matrix& a, double tol = 1e-12);
inline EigenSystem hermitian_eig(const HermitianOperator& a) { return hermitian_eig(a.matrix()); }

/// f(A) = V f(w) V^dagger for a Hermitian A given by its eigensystem.
template <class F>
Matrix apply_function(const EigenSystem& es, F&& f) {
  Vector fw(es.values.size());
  for (Eigen::Index i = 0; i < es.values.size(); ++i) fw(i) = f(es.values(i));
  return es.vectors * fw.asDiagonal() * es.vectors.adjoint();
}

/// exp(-i H t / hbar) via eigendecomposition.
Matrix propagator(const HermitianOperator& h, double t, double hbar = 1.0);

/// Cached eigensystem of H; evaluates U(t) or its action in O(d^2) per call after setup.
class Propagator {
 public:
  Propagator() = default;
  Propagator(const HermitianOperator& h, double hbar);

  int dim() const { return static_cast<int>(eig_.values.size()); }
  const EigenSystem& eigensystem() const { return eig_; }
  double hbar() const { return hbar_; }
  Matrix at(double t) const;
  /// Phases exp(-i w_k t / hbar) in the H eigenbasis.
  Vector phases(double t) const;
  Vector apply(const Vector& psi, double t) const;

 private:
  EigenSystem eig_;
  double hbar_ = 1.0;
};

Matrix kron(const Matrix& a, const Matrix& b);

/// I^(k-1) (x) A (x) I^(M-k); slot 1 is the slowest index (row-major tensor order).
Matrix embed_at_slot(const Matrix& a, int k, int particles);

/// Pair operator W on slots (k,l), k < l, of an M-fold tensor product of dimension d.
Matrix embed_pair(const Matrix& w, int k, int l, int particles, int d);

/// sum_k A(k) + sum_{k<l} W(k,l) on the M-fold tensor product.
Matrix tensor_hamiltonian(const Matrix& single, const Matrix* pair, int particles);

/// Permutation operator P_pi with (P_pi v)[i_{pi(1)}..] layout; perm[j] is the
/// slot that factor j moves to. Slots are zero-based here.
Matrix permutation_operator(std::span<const int> perm, int d);
Matrix transposition_operator(int a, int b, int particles, int d);
/// Projector onto the permutation-symmetric subspace, explicit average over M! permutations (M <= 4).
Matrix symmetric_projector(int particles, int d);
StateVector symmetrize(const StateVector& v, int particles, int d);

/// -Tr(p ln p) of rho / Tr(rho), with 0 ln 0 = 0.
double von_neumann_entropy(const DensityMatrix& rho);
double von_neumann_entropy(const Matrix& rho);

int int_pow(int base, int exp);

}  // namespace qtraj
