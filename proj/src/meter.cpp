#include "qtraj/meter.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

namespace qtraj {

Complex GaussianShape::value(double x) const {
  return scale * std::exp(-0.5 * kPi * x * x) * std::exp(kI * (modulation * x));
}

Complex GaussianShape::derivative(double x) const { return (-kPi * x + kI * modulation) * value(x); }

Complex GaussianShape::second_derivative(double x) const {
  const Complex s = -kPi * x + kI * modulation;
  return (s * s - kPi) * value(x);
}

namespace {

std::vector<double> trapezoid_weights(const std::vector<double>& grid) {
  const std::size_t n = grid.size();
  std::vector<double> w(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double h = grid[i + 1] - grid[i];
    w[i] += 0.5 * h;
    w[i + 1] += 0.5 * h;
  }
  return w;
}

double quadrature_norm2_of(const std::vector<Complex>& values, const std::vector<double>& weights) {
  double s = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) s += std::norm(values[i]) * weights[i];
  return s;
}

}  // namespace

PointerState::PointerState(std::vector<double> grid, std::vector<Complex> values, std::optional<GaussianShape> analytic)
    : grid_(std::move(grid)), values_(std::move(values)), analytic_(analytic) {
  require(grid_.size() >= 16, "pointer grid needs at least 16 points");
  require(grid_.size() == values_.size(), "pointer grid and values differ in length");
  for (std::size_t i = 0; i + 1 < grid_.size(); ++i)
    require(grid_[i] < grid_[i + 1], "pointer grid must be strictly increasing");
  for (const Complex& v : values_)
    require(std::isfinite(v.real()) && std::isfinite(v.imag()), "pointer values must be finite");
  weights_ = trapezoid_weights(grid_);
  const double n2 = quadrature_norm2();
  if (std::abs(n2 - 1.0) > 1e-8) {
    std::ostringstream os;
    os << "pointer state must have unit quadrature norm, got " << std::setprecision(17) << n2;
    fail(ErrorKind::validation, os.str());
  }
}

PointerState PointerState::from_table(std::vector<double> grid, std::vector<Complex> values) {
  require(grid.size() == values.size() && grid.size() >= 2, "pointer table needs matching grid and values");
  const double n2 = quadrature_norm2_of(values, trapezoid_weights(grid));
  if (!(n2 > 0.0)) fail(ErrorKind::degenerate, "pointer table has zero norm");
  const double s = 1.0 / std::sqrt(n2);
  for (Complex& v : values) v *= s;
  return PointerState(std::move(grid), std::move(values));
}

bool PointerState::is_real() const {
  if (analytic_) return analytic_->modulation == 0.0;
  return std::all_of(values_.begin(), values_.end(), [](const Complex& v) { return v.imag() == 0.0; });
}

double PointerState::quadrature_norm2() const { return quadrature_norm2_of(values_, weights_); }

Complex PointerState::value_at(double x) const {
  if (analytic_) return analytic_->value(x);
  const int n = size();
  if (x < grid_.front() || x > grid_.back()) return 0.0;
  auto it = std::upper_bound(grid_.begin(), grid_.end(), x);
  int j = static_cast<int>(it - grid_.begin()) - 1;
  j = std::clamp(j, 0, n - 2);
  int lo = std::clamp(j - 2, 0, n - 6);
  Complex sum = 0.0;
  for (int a = lo; a < lo + 6; ++a) {
    double basis = 1.0;
    for (int b = lo; b < lo + 6; ++b)
      if (b != a) basis *= (x - grid_[b]) / (grid_[a] - grid_[b]);
    sum += basis * values_[a];
  }
  return sum;
}

std::vector<Complex> PointerState::derivative() const {
  const int n = size();
  std::vector<Complex> d(n);
  if (analytic_) {
    for (int i = 0; i < n; ++i) d[i] = analytic_->derivative(grid_[i]);
    return d;
  }
  const auto& x = grid_;
  const auto& f = values_;
  for (int i = 1; i + 1 < n; ++i) {
    const double h1 = x[i] - x[i - 1], h2 = x[i + 1] - x[i];
    d[i] = (-h2 / (h1 * (h1 + h2))) * f[i - 1] + ((h2 - h1) / (h1 * h2)) * f[i] + (h1 / (h2 * (h1 + h2))) * f[i + 1];
  }
  {
    const double h1 = x[1] - x[0], h2 = x[2] - x[1];
    d[0] = (-(2 * h1 + h2) / (h1 * (h1 + h2))) * f[0] + ((h1 + h2) / (h1 * h2)) * f[1] - (h1 / (h2 * (h1 + h2))) * f[2];
  }
  {
    const double h1 = x[n - 2] - x[n - 3], h2 = x[n - 1] - x[n - 2];
    d[n - 1] = (h2 / (h1 * (h1 + h2))) * f[n - 3] - ((h1 + h2) / (h1 * h2)) * f[n - 2] +
               ((2 * h2 + h1) / (h2 * (h1 + h2))) * f[n - 1];
  }
  return d;
}

std::vector<Complex> PointerState::second_derivative() const {
  const int n = size();
  std::vector<Complex> d(n);
  if (analytic_) {
    for (int i = 0; i < n; ++i) d[i] = analytic_->second_derivative(grid_[i]);
    return d;
  }
  const auto& x = grid_;
  const auto& f = values_;
  for (int i = 1; i + 1 < n; ++i) {
    const double h1 = x[i] - x[i - 1], h2 = x[i + 1] - x[i];
    d[i] = 2.0 * (f[i - 1] / (h1 * (h1 + h2)) - f[i] / (h1 * h2) + f[i + 1] / (h2 * (h1 + h2)));
  }
  d[0] = d[1];
  d[n - 1] = d[n - 2];
  return d;
}

PointerState gaussian_pointer(int n, double half_width, double modulation) {
  require(n >= 16, "gaussian_pointer: need N >= 16 grid points");
  require(half_width > 0.0 && std::isfinite(half_width), "gaussian_pointer: half-width L must be positive");
  std::vector<double> grid(n);
  for (int i = 0; i < n; ++i) grid[i] = -half_width + 2.0 * half_width * i / (n - 1);
  GaussianShape shape{1.0, modulation};
  std::vector<Complex> values(n);
  for (int i = 0; i < n; ++i) values[i] = shape.value(grid[i]);
  shape.scale = 1.0 / std::sqrt(quadrature_norm2_of(values, trapezoid_weights(grid)));
  for (int i = 0; i < n; ++i) values[i] = shape.value(grid[i]);
  return PointerState(std::move(grid), std::move(values), shape);
}

PointerState load_pointer_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::validation, "cannot open pointer table " + path.string());
  std::vector<double> grid;
  std::vector<Complex> values;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream row(line);
    double lambda = 0.0, re = 0.0, im = 0.0;
    if (!(row >> lambda >> re)) {
      std::ostringstream os;
      os << path.string() << ":" << line_no << ": expected 'lambda re [im]'";
      fail(ErrorKind::parse, os.str());
    }
    if (!(row >> im)) im = 0.0;
    grid.push_back(lambda);
    values.emplace_back(re, im);
  }
  return PointerState::from_table(std::move(grid), std::move(values));
}

void save_pointer_table(const PointerState& pointer, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::validation, "cannot write pointer table " + path.string());
  out << "# lambda re im\n" << std::setprecision(17);
  for (int i = 0; i < pointer.size(); ++i)
    out << pointer.grid()[i] << ' ' << pointer.values()[i].real() << ' ' << pointer.values()[i].imag() << '\n';
}

MeterModel::MeterModel(double kappa, HermitianOperator r, PointerState pointer, MeterOptions options)
    : kappa_(kappa), r_(std::move(r)), pointer_(std::move(pointer)), options_(options) {
  require(std::isfinite(kappa_), "kappa must be finite");
  r_eig_ = hermitian_eig(r_);
  if (options_.enforce_coverage) {
    const double needed = options_.coverage_base + std::abs(kappa_) * spectral_radius();
    if (pointer_.half_width() < needed) {
      std::ostringstream os;
      os << "pointer grid half-width " << pointer_.half_width() << " violates coverage rule L >= "
         << options_.coverage_base << " + kappa max|spec R| = " << needed;
      fail(ErrorKind::validation, os.str());
    }
  }
  const int n = grid_size();
  const int d = dim();
  weights_.assign(n, 0.0);
  table_ = Matrix::Zero(n, d);
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    const Complex f = pointer_.values()[i];
    if (std::abs(f) < options_.support_threshold) continue;
    weights_[i] = std::norm(f) * pointer_.weights()[i];
    z += weights_[i];
    for (int k = 0; k < d; ++k) table_(i, k) = pointer_.value_at(lambda(i) - kappa_ * r_eig_.values(k)) / f;
  }
  if (!(z > 0.0)) fail(ErrorKind::degenerate, "pointer has no support above threshold");
  for (double& w : weights_) w /= z;
}

double MeterModel::spectral_radius() const {
  return std::max(std::abs(r_eig_.values(0)), std::abs(r_eig_.values(r_eig_.values.size() - 1)));
}

void MeterModel::check_in_range(double lambda) const {
  if (!(lambda >= pointer_.grid().front() && lambda <= pointer_.grid().back())) {
    std::ostringstream os;
    os << "pointer value " << lambda << " outside grid [" << pointer_.grid().front() << ", "
       << pointer_.grid().back() << "]";
    fail(ErrorKind::out_of_range, os.str());
  }
}

Matrix MeterModel::localizer(double lambda) const {
  check_in_range(lambda);
  return apply_function(r_eig_, [&](double r) { return pointer_.value_at(lambda - kappa_ * r); });
}

Vector MeterModel::reduction_factors(double lambda) const {
  check_in_range(lambda);
  const int i = grid_index(lambda);
  if (i >= 0 && on_support(i)) return table_.row(i).transpose();
  const Complex f = pointer_.value_at(lambda);
  if (std::abs(f) < options_.support_threshold) {
    std::ostringstream os;
    os << "reduction undefined at lambda = " << lambda << ": |f0| = " << std::abs(f) << " below threshold";
    fail(ErrorKind::degenerate, os.str());
  }
  Vector g(dim());
  for (int k = 0; k < dim(); ++k) g(k) = pointer_.value_at(lambda - kappa_ * r_eig_.values(k)) / f;
  return g;
}

Matrix MeterModel::reduction(double lambda) const {
  const Vector g = reduction_factors(lambda);
  return r_eig_.vectors * g.asDiagonal() * r_eig_.vectors.adjoint();
}

Matrix MeterModel::reduction_at(int i) const {
  require(i >= 0 && i < grid_size(), "grid index out of range");
  if (!on_support(i)) {
    std::ostringstream os;
    os << "reduction undefined at grid point " << i << " (lambda = " << lambda(i) << "): outside pointer support";
    fail(ErrorKind::degenerate, os.str());
  }
  return r_eig_.vectors * table_.row(i).transpose().asDiagonal() * r_eig_.vectors.adjoint();
}

std::vector<double> MeterModel::output_density(const StateVector& eta) const {
  require(eta.dim() == dim(), "output_density: state dimension mismatch");
  if (!eta.is_normalized(1e-8)) fail(ErrorKind::validation, "output_density: state must be normalized (tol 1e-8)");
  const Vector c = r_eig_.vectors.adjoint() * eta.amps();
  std::vector<double> p(grid_size(), 0.0);
  for (int i = 0; i < grid_size(); ++i) {
    double s = 0.0;
    if (on_support(i)) {
      for (int k = 0; k < dim(); ++k) s += std::norm(table_(i, k) * c(k));
      s *= std::norm(pointer_.values()[i]);
    } else {
      for (int k = 0; k < dim(); ++k) s += std::norm(pointer_.value_at(lambda(i) - kappa_ * r_eig_.values(k)) * c(k));
    }
    p[i] = s;
  }
  return p;
}

StateVector MeterModel::posterior_state(const StateVector& eta, double lambda) const {
  require(eta.dim() == dim(), "posterior_state: state dimension mismatch");
  const Vector psi = reduction(lambda) * eta.amps();
  const double n = psi.norm();
  if (n < 1e-12) {
    std::ostringstream os;
    os << "posterior_state: zero likelihood at lambda = " << lambda;
    fail(ErrorKind::degenerate, os.str());
  }
  return StateVector(psi / n);
}

Matrix MeterModel::povm_sum() const {
  RealVector diag = RealVector::Zero(dim());
  for (int i = 0; i < grid_size(); ++i) {
    if (!on_support(i)) continue;
    for (int k = 0; k < dim(); ++k) diag(k) += std::norm(table_(i, k)) * weights_[i];
  }
  return r_eig_.vectors * diag.cast<Complex>().asDiagonal() * r_eig_.vectors.adjoint();
}

double MeterModel::povm_defect() const { return max_abs(povm_sum() - Matrix::Identity(dim(), dim())); }

int MeterModel::grid_index(double lambda) const {
  const auto& g = pointer_.grid();
  auto it = std::lower_bound(g.begin(), g.end(), lambda);
  const double tol = 1e-12 * std::max(1.0, std::abs(lambda));
  for (auto cand : {it, it == g.begin() ? it : it - 1}) {
    if (cand != g.end() && std::abs(*cand - lambda) <= tol) return static_cast<int>(cand - g.begin());
  }
  return -1;
}

Matrix gaussian_reduction_closed_form(const HermitianOperator& r, double kappa, double lambda) {
  const Matrix& rm = r.matrix();
  const Matrix id = Matrix::Identity(rm.rows(), rm.cols());
  const Matrix exponent = kPi * kappa * rm * (lambda * id - 0.5 * kappa * rm);
  return exponent.exp();
}

std::vector<SharpProjection> sharp_projections(const HermitianOperator& r, double kappa) {
  require(kappa > 0.0, "sharp_projections: kappa must be positive");
  const EigenSystem es = hermitian_eig(r);
  std::map<long long, Matrix> cells;
  const int d = r.dim();
  for (int k = 0; k < d; ++k) {
    const long long cell = static_cast<long long>(std::floor(es.values(k) / kappa + 1e-9));
    auto [it, inserted] = cells.try_emplace(cell, Matrix::Zero(d, d));
    it->second += es.vectors.col(k) * es.vectors.col(k).adjoint();
  }
  std::vector<SharpProjection> out;
  for (auto& [cell, proj] : cells) out.push_back({static_cast<double>(cell) * kappa, std::move(proj)});
  return out;
}

StateVector single_kick_evolve(const MeterModel& meter, const HermitianOperator& h, const StateVector& eta, double t0,
                               double t, std::optional<double> lambda, double hbar) {
  require(t0 <= 0.0 && t > 0.0, "single_kick_evolve: need t0 <= 0 < t");
  require(h.dim() == meter.dim() && eta.dim() == meter.dim(), "single_kick_evolve: dimension mismatch");
  const Propagator u(h, hbar);
  if (!lambda) return StateVector(u.apply(eta.amps(), t - t0));
  Vector psi = u.apply(eta.amps(), -t0);
  psi = meter.reduction(*lambda) * psi;
  return StateVector(u.apply(psi, t));
}

Matrix joint_single_kick(const MeterModel& meter, const StateVector& eta) {
  require(eta.dim() == meter.dim(), "joint_single_kick: dimension mismatch");
  const EigenSystem& es = meter.r_eigen();
  const Vector c = es.vectors.adjoint() * eta.amps();
  Matrix psi(meter.dim(), meter.grid_size());
  for (int k = 0; k < meter.dim(); ++k)
    for (int i = 0; i < meter.grid_size(); ++i)
      psi(k, i) = meter.pointer().value_at(meter.lambda(i) - meter.kappa() * es.values(k)) * c(k);
  return psi;
}

OsmoticTables osmotic_tables(const PointerState& pointer, double support_threshold) {
  const auto d1 = pointer.derivative();
  const auto d2 = pointer.second_derivative();
  OsmoticTables out{std::vector<Complex>(pointer.size(), 0.0), std::vector<Complex>(pointer.size(), 0.0)};
  for (int i = 0; i < pointer.size(); ++i) {
    const Complex f = pointer.values()[i];
    if (std::abs(f) < support_threshold) continue;
    out.first[i] = -d1[i] / f;
    out.second[i] = d2[i] / f;
  }
  return out;
}

MeterModel make_gaussian_meter(double kappa, const HermitianOperator& r, int grid_points, double modulation) {
  const EigenSystem es = hermitian_eig(r);
  const double radius = std::max(std::abs(es.values(0)), std::abs(es.values(es.values.size() - 1)));
  const double half_width = 6.0 + std::abs(kappa) * radius;
  return MeterModel(kappa, r, gaussian_pointer(grid_points, half_width, modulation));
}

}  // namespace qtraj
