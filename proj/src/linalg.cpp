#include "qtraj/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace qtraj {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::validation: return "validation";
    case ErrorKind::out_of_range: return "out-of-range";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::capacity: return "capacity";
    case ErrorKind::parse: return "parse";
  }
  return "unknown";
}

namespace {

bool all_finite(const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!std::isfinite(v(i).real()) || !std::isfinite(v(i).imag())) return false;
  return true;
}

}  // namespace

StateVector::StateVector(Vector amps) : amps_(std::move(amps)) {
  require(amps_.size() > 0, "state vector must have positive dimension");
  require(all_finite(amps_), "state vector has non-finite entries");
}

StateVector StateVector::basis(int dim, int k) {
  require(dim > 0 && k >= 0 && k < dim, "basis index out of range");
  Vector v = Vector::Zero(dim);
  v(k) = 1.0;
  return StateVector(std::move(v));
}

StateVector StateVector::from(std::initializer_list<Complex> amps) {
  Vector v(static_cast<Eigen::Index>(amps.size()));
  Eigen::Index i = 0;
  for (Complex a : amps) v(i++) = a;
  return StateVector(std::move(v));
}

bool StateVector::is_normalized(double tol) const { return std::abs(norm2() - 1.0) <= tol; }

StateVector StateVector::normalized() const {
  const double n = amps_.norm();
  if (!(n > 0.0)) fail(ErrorKind::degenerate, "cannot normalize a zero state vector");
  return StateVector(amps_ / n);
}

double max_abs(const Matrix& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

double hermiticity_defect(const Matrix& a) { return max_abs(a - a.adjoint()); }

Matrix hermitize(const Matrix& a) { return 0.5 * (a + a.adjoint()); }

double expectation(const Matrix& x, const Matrix& rho) {
  return (x.cwiseProduct(rho.transpose())).sum().real();
}

double expectation(const Matrix& x, const Vector& psi) { return psi.dot(x * psi).real(); }

HermitianOperator::HermitianOperator(Matrix entries, double tol) : m_(std::move(entries)) {
  require(m_.rows() > 0 && m_.rows() == m_.cols(), "Hermitian operator must be a nonempty square matrix");
  const double defect = hermiticity_defect(m_);
  if (!(defect <= tol)) {
    std::ostringstream os;
    os << "operator is not Hermitian: max|A - A^dagger| = " << defect;
    fail(ErrorKind::validation, os.str());
  }
}

HermitianOperator HermitianOperator::diagonal(std::span<const double> values) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
  return HermitianOperator(std::move(m));
}

HermitianOperator HermitianOperator::zero(int dim) { return HermitianOperator(Matrix::Zero(dim, dim)); }

HermitianOperator HermitianOperator::identity(int dim) { return HermitianOperator(Matrix::Identity(dim, dim)); }

HermitianOperator HermitianOperator::hermitized(const Matrix& a) {
  require(a.rows() == a.cols(), "operator must be square");
  return HermitianOperator(hermitize(a));
}

DensityMatrix::DensityMatrix(Matrix entries) : m_(std::move(entries)) {
  require(m_.rows() > 0 && m_.rows() == m_.cols(), "density matrix must be a nonempty square matrix");
  const double defect = hermiticity_defect(m_);
  if (!(defect <= 1e-12)) {
    std::ostringstream os;
    os << "density matrix is not Hermitian: max|A - A^dagger| = " << defect;
    fail(ErrorKind::validation, os.str());
  }
  m_ = hermitize(m_);
  require(trace() >= 0.0, "density matrix trace must be nonnegative");
  const double lo = min_eigenvalue();
  if (lo < -1e-10) {
    std::ostringstream os;
    os << "density matrix is not positive semidefinite: min eigenvalue " << lo;
    fail(ErrorKind::validation, os.str());
  }
}

DensityMatrix DensityMatrix::pure(const StateVector& psi) {
  DensityMatrix out;
  out.m_ = psi.amps() * psi.amps().adjoint();
  return out;
}

DensityMatrix DensityMatrix::trusted(const Matrix& entries) {
  DensityMatrix out;
  out.m_ = hermitize(entries);
  return out;
}

double DensityMatrix::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m_, Eigen::EigenvaluesOnly);
  return solver.eigenvalues()(0);
}

DensityMatrix DensityMatrix::normalized() const {
  const double tr = trace();
  if (!(tr > 0.0)) fail(ErrorKind::degenerate, "cannot normalize a density matrix with zero trace");
  return trusted(m_ / tr);
}

EigenSystem hermitian_eig(const Matrix& a, double tol) {
  require(a.rows() > 0 && a.rows() == a.cols(), "eigendecomposition needs a nonempty square matrix");
  const double defect = hermiticity_defect(a);
  if (!(defect <= tol)) {
    std::ostringstream os;
    os << "hermitian_eig: input is not Hermitian, max asymmetry " << defect;
    fail(ErrorKind::validation, os.str());
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(hermitize(a));
  if (solver.info() != Eigen::Success) fail(ErrorKind::numeric, "hermitian_eig: solver did not converge");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

Matrix propagator(const HermitianOperator& h, double t, double hbar) {
  require(hbar > 0.0, "hbar must be positive");
  return Propagator(h, hbar).at(t);
}

Propagator::Propagator(const HermitianOperator& h, double hbar) : eig_(hermitian_eig(h)), hbar_(hbar) {
  require(hbar > 0.0, "hbar must be positive");
}

Vector Propagator::phases(double t) const {
  Vector p(eig_.values.size());
  for (Eigen::Index k = 0; k < p.size(); ++k) p(k) = std::exp(-kI * eig_.values(k) * t / hbar_);
  return p;
}

Matrix Propagator::at(double t) const {
  return eig_.vectors * phases(t).asDiagonal() * eig_.vectors.adjoint();
}

Vector Propagator::apply(const Vector& psi, double t) const {
  Vector c = eig_.vectors.adjoint() * psi;
  c = c.cwiseProduct(phases(t));
  return eig_.vectors * c;
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

int int_pow(int base, int exp) {
  int out = 1;
  for (int i = 0; i < exp; ++i) out *= base;
  return out;
}

Matrix embed_at_slot(const Matrix& a, int k, int particles) {
  require(a.rows() == a.cols() && a.rows() > 0, "embed_at_slot: operator must be square");
  if (k < 1 || k > particles) {
    std::ostringstream os;
    os << "embed_at_slot: slot " << k << " outside 1.." << particles;
    fail(ErrorKind::validation, os.str());
  }
  const int d = static_cast<int>(a.rows());
  const Matrix left = Matrix::Identity(int_pow(d, k - 1), int_pow(d, k - 1));
  const Matrix right = Matrix::Identity(int_pow(d, particles - k), int_pow(d, particles - k));
  return kron(kron(left, a), right);
}

namespace {

std::vector<int> digits_of(int index, int particles, int d) {
  std::vector<int> digits(particles);
  for (int s = particles - 1; s >= 0; --s) {
    digits[s] = index % d;
    index /= d;
  }
  return digits;
}

int index_of(const std::vector<int>& digits, int d) {
  int index = 0;
  for (int digit : digits) index = index * d + digit;
  return index;
}

}  // namespace

Matrix embed_pair(const Matrix& w, int k, int l, int particles, int d) {
  require(k >= 1 && l <= particles && k < l, "embed_pair: need 1 <= k < l <= M");
  require(w.rows() == d * d && w.cols() == d * d, "embed_pair: pair operator must be d^2 x d^2");
  const int dim = int_pow(d, particles);
  Matrix out = Matrix::Zero(dim, dim);
  for (int a = 0; a < dim; ++a) {
    const auto da = digits_of(a, particles, d);
    for (int s = 0; s < d; ++s) {
      for (int t = 0; t < d; ++t) {
        auto db = da;
        db[k - 1] = s;
        db[l - 1] = t;
        out(a, index_of(db, d)) += w(da[k - 1] * d + da[l - 1], s * d + t);
      }
    }
  }
  return out;
}

Matrix tensor_hamiltonian(const Matrix& single, const Matrix* pair, int particles) {
  require(particles >= 1, "particle count must be positive");
  const int d = static_cast<int>(single.rows());
  const int dim = int_pow(d, particles);
  Matrix h = Matrix::Zero(dim, dim);
  for (int k = 1; k <= particles; ++k) h += embed_at_slot(single, k, particles);
  if (pair != nullptr) {
    require(hermiticity_defect(*pair) <= 1e-12, "pair interaction W must be Hermitian");
    for (int k = 1; k <= particles; ++k)
      for (int l = k + 1; l <= particles; ++l) h += embed_pair(*pair, k, l, particles, d);
  }
  return h;
}

Matrix permutation_operator(std::span<const int> perm, int d) {
  const int particles = static_cast<int>(perm.size());
  const int dim = int_pow(d, particles);
  Matrix out = Matrix::Zero(dim, dim);
  std::vector<int> moved(particles);
  for (int a = 0; a < dim; ++a) {
    const auto da = digits_of(a, particles, d);
    for (int j = 0; j < particles; ++j) moved[perm[j]] = da[j];
    out(index_of(moved, d), a) = 1.0;
  }
  return out;
}

Matrix transposition_operator(int a, int b, int particles, int d) {
  std::vector<int> perm(particles);
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[a], perm[b]);
  return permutation_operator(perm, d);
}

Matrix symmetric_projector(int particles, int d) {
  if (particles < 1 || particles > 4) fail(ErrorKind::capacity, "symmetrization supports 1 <= M <= 4");
  const int dim = int_pow(d, particles);
  std::vector<int> perm(particles);
  std::iota(perm.begin(), perm.end(), 0);
  Matrix sum = Matrix::Zero(dim, dim);
  int count = 0;
  do {
    sum += permutation_operator(perm, d);
    ++count;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return sum / static_cast<double>(count);
}

StateVector symmetrize(const StateVector& v, int particles, int d) {
  require(d > 0 && particles > 0, "symmetrize: d and M must be positive");
  if (particles > 4) fail(ErrorKind::capacity, "symmetrization supports 1 <= M <= 4");
  if (v.dim() != int_pow(d, particles)) {
    std::ostringstream os;
    os << "symmetrize: dimension " << v.dim() << " is not d^M = " << int_pow(d, particles);
    fail(ErrorKind::validation, os.str());
  }
  return StateVector(symmetric_projector(particles, d) * v.amps());
}

double von_neumann_entropy(const Matrix& rho) {
  const double tr = rho.trace().real();
  if (!(tr > 0.0)) fail(ErrorKind::validation, "entropy needs a density matrix with positive trace");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(hermitize(rho) / tr, Eigen::EigenvaluesOnly);
  double s = 0.0;
  for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) {
    const double p = solver.eigenvalues()(i);
    if (p > 0.0) s -= p * std::log(p);
  }
  return std::max(s, 0.0);
}

double von_neumann_entropy(const DensityMatrix& rho) { return von_neumann_entropy(rho.matrix()); }

}  // namespace qtraj
