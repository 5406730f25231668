#include "qtraj/master.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qtraj {

namespace {

const HermitianOperator& single_r(const MasterConfig& cfg) {
  if (cfg.mode == MasterMode::jump_averaged || cfg.r.dim() == 0) {
    require(cfg.meter != nullptr, "jump-averaged master needs a meter");
    return cfg.meter->r();
  }
  return cfg.r;
}

const PointerState& pointer_of(const MasterConfig& cfg) {
  if (cfg.pointer) return *cfg.pointer;
  require(cfg.meter != nullptr, "diffusive master needs a pointer state or a meter");
  return cfg.meter->pointer();
}

void validate(const MasterConfig& cfg) {
  require(cfg.particles >= 1, "particle count must be positive");
  if (cfg.particles > 4) fail(ErrorKind::capacity, "particle count M must be in 1..4");
  require(cfg.hbar > 0.0, "hbar must be positive");
  require(cfg.nu >= 0.0 && std::isfinite(cfg.nu), "nu >= 0 required");
  const int d = single_r(cfg).dim();
  require(cfg.h.dim() == int_pow(d, cfg.particles), "H must act on the M-particle space of dimension d^M");
}

Matrix commutator_term(const Matrix& h, const Matrix& rho, double hbar) {
  return (-kI / hbar) * (h * rho - rho * h);
}

// rows: product index a, columns: slot digit r-index, slot 0 slowest
std::vector<std::vector<int>> digits(int d, int particles) {
  const int dim = int_pow(d, particles);
  std::vector<std::vector<int>> out(dim, std::vector<int>(particles));
  for (int a = 0; a < dim; ++a) {
    int rest = a;
    for (int s = particles - 1; s >= 0; --s) {
      out[a][s] = rest % d;
      rest /= d;
    }
  }
  return out;
}

}  // namespace

Matrix jump_master_step(const MasterConfig& cfg, const Matrix& rho) {
  validate(cfg);
  const MeterModel& meter = *cfg.meter;
  const int m = cfg.particles;
  require(rho.rows() == cfg.h.dim() && rho.cols() == cfg.h.dim(), "density matrix dimension mismatch");
  Matrix averaged = Matrix::Zero(rho.rows(), rho.cols());
  const auto& w = meter.outcome_weights();
  for (int k = 1; k <= m; ++k) {
    for (int i = 0; i < meter.grid_size(); ++i) {
      if (w[i] <= 0.0) continue;
      const Matrix g = embed_at_slot(meter.reduction_at(i), k, m);
      averaged += w[i] * (g * rho * g.adjoint());
    }
  }
  return commutator_term(cfg.h.matrix(), rho, cfg.hbar) + cfg.nu * (averaged - static_cast<double>(m) * rho);
}

Matrix diffusive_master_step(const MasterConfig& cfg, const Matrix& rho) {
  validate(cfg);
  const HermitianOperator& r = single_r(cfg);
  const NoiseCovariance cov = noise_covariance(pointer_of(cfg), cfg.hbar);
  const double rate = cfg.gamma * cfg.gamma * cov.sigma2 / (cfg.hbar * cfg.hbar);
  const int m = cfg.particles;
  Matrix out = commutator_term(cfg.h.matrix(), rho, cfg.hbar);
  for (int k = 1; k <= m; ++k) {
    const Matrix rk = embed_at_slot(r.matrix(), k, m);
    const Matrix rk2 = rk * rk;
    out += rate * (rk * rho * rk - 0.5 * (rk2 * rho + rho * rk2));
  }
  return out;
}

Generator::Generator(int dim, Map working, Matrix basis)
    : dim_(dim), working_(std::move(working)), basis_(std::move(basis)) {
  require(basis_.rows() == dim && basis_.cols() == dim, "generator basis dimension mismatch");
}

Generator Generator::from_function(int dim, Map map) {
  return Generator(dim, std::move(map), Matrix::Identity(dim, dim));
}

Matrix Generator::to_working(const Matrix& rho) const { return basis_.adjoint() * rho * basis_; }
Matrix Generator::from_working(const Matrix& rho_working) const {
  return basis_ * rho_working * basis_.adjoint();
}

Matrix Generator::apply(const Matrix& rho) const { return from_working(working_(to_working(rho))); }

Matrix Generator::superoperator() const {
  const int n = dim_ * dim_;
  Matrix s(n, n);
  for (int b = 0; b < dim_; ++b) {
    for (int a = 0; a < dim_; ++a) {
      Matrix e = Matrix::Zero(dim_, dim_);
      e(a, b) = 1.0;
      const Matrix out = apply(e);
      s.col(a + dim_ * b) = Eigen::Map<const Vector>(out.data(), n);
    }
  }
  return s;
}

double Generator::norm() const {
  if (!norm_) {
    const int n = dim_ * dim_;
    Matrix s(n, n);
    for (int b = 0; b < dim_; ++b) {
      for (int a = 0; a < dim_; ++a) {
        Matrix e = Matrix::Zero(dim_, dim_);
        e(a, b) = 1.0;
        const Matrix out = working_(e);
        s.col(a + dim_ * b) = Eigen::Map<const Vector>(out.data(), n);
      }
    }
    // the working basis change is unitary on Hilbert-Schmidt space, so the norm is unchanged
    Eigen::SelfAdjointEigenSolver<Matrix> es(s.adjoint() * s, Eigen::EigenvaluesOnly);
    norm_ = std::sqrt(std::max(es.eigenvalues().maxCoeff(), 0.0));
  }
  return *norm_;
}

Generator make_generator(const MasterConfig& cfg) {
  validate(cfg);
  const int m = cfg.particles;
  const HermitianOperator& r = single_r(cfg);
  const int d = r.dim();
  const int dim = int_pow(d, m);

  EigenSystem eig = cfg.mode == MasterMode::jump_averaged ? cfg.meter->r_eigen() : hermitian_eig(r);
  Matrix basis = eig.vectors;
  for (int k = 1; k < m; ++k) basis = kron(basis, eig.vectors);

  const auto dig = digits(d, m);
  Matrix multiplier = Matrix::Zero(dim, dim);
  if (cfg.mode == MasterMode::jump_averaged) {
    const MeterModel& meter = *cfg.meter;
    const Matrix& g = meter.reduction_table();
    const auto& w = meter.outcome_weights();
    // overlap(x, y) = sum_i mu0_i g(i,x) g(i,y)^*
    Matrix overlap = Matrix::Zero(d, d);
    for (int i = 0; i < meter.grid_size(); ++i) {
      if (w[i] <= 0.0) continue;
      overlap += w[i] * (g.row(i).transpose() * g.row(i).conjugate());
    }
    for (int a = 0; a < dim; ++a)
      for (int b = 0; b < dim; ++b) {
        Complex s = 0.0;
        for (int k = 0; k < m; ++k) s += overlap(dig[a][k], dig[b][k]) - 1.0;
        multiplier(a, b) = cfg.nu * s;
      }
  } else {
    const NoiseCovariance cov = noise_covariance(pointer_of(cfg), cfg.hbar);
    const double rate = cfg.gamma * cfg.gamma * cov.sigma2 / (cfg.hbar * cfg.hbar);
    for (int a = 0; a < dim; ++a)
      for (int b = 0; b < dim; ++b) {
        double s = 0.0;
        for (int k = 0; k < m; ++k) {
          const double diff = eig.values(dig[a][k]) - eig.values(dig[b][k]);
          s += diff * diff;
        }
        multiplier(a, b) = -0.5 * rate * s;
      }
  }

  const Matrix h_working = basis.adjoint() * cfg.h.matrix() * basis;
  const double hbar = cfg.hbar;
  auto working = [h_working, multiplier, hbar](const Matrix& rho) -> Matrix {
    Matrix out = (-kI / hbar) * (h_working * rho - rho * h_working);
    out.array() += multiplier.array() * rho.array();
    return out;
  };
  return Generator(dim, working, basis);
}

Generator unitary_generator(const HermitianOperator& h, double hbar) {
  require(hbar > 0.0, "hbar must be positive");
  const Matrix hm = h.matrix();
  return Generator::from_function(h.dim(), [hm, hbar](const Matrix& rho) -> Matrix {
    return (-kI / hbar) * (hm * rho - rho * hm);
  });
}

MasterPath rk4_solve(const Generator& gen, const Matrix& rho0, double t_final, double dt,
                     std::span<const double> sample_times) {
  require(rho0.rows() == gen.dim() && rho0.cols() == gen.dim(), "initial density matrix dimension mismatch");
  require(t_final >= 0.0 && std::isfinite(t_final), "time horizon T must be nonnegative");
  require(dt > 0.0, "time step dt must be positive");
  require(std::is_sorted(sample_times.begin(), sample_times.end()), "sample times must be ascending");
  if (dt * gen.norm() > kStabilityBound * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "RK4 stability bound violated: dt * ||L|| = " << dt * gen.norm() << " > " << kStabilityBound;
    fail(ErrorKind::validation, os.str());
  }
  const double ratio = t_final / dt;
  const long long steps = std::llround(ratio);
  if (std::abs(ratio - static_cast<double>(steps)) > 1e-6) {
    std::ostringstream os;
    os << "T = " << t_final << " is not an integer multiple of dt = " << dt;
    fail(ErrorKind::validation, os.str());
  }
  std::vector<long long> sample_steps;
  for (double ts : sample_times) {
    require(ts >= 0.0 && ts <= t_final * (1.0 + 1e-12), "sample times must lie in [0, T]");
    const double s = ts / dt;
    const long long n = std::llround(s);
    require(std::abs(s - static_cast<double>(n)) <= 1e-6, "sample times must be multiples of dt");
    sample_steps.push_back(n);
  }

  MasterPath path;
  Matrix rho = gen.to_working(rho0);
  std::size_t next = 0;
  auto record = [&](long long n) {
    while (next < sample_steps.size() && sample_steps[next] == n) {
      path.times.push_back(sample_times[next]);
      path.rhos.push_back(hermitize(gen.from_working(rho)));
      ++next;
    }
  };
  record(0);
  for (long long n = 1; n <= steps; ++n) {
    const Matrix k1 = gen.apply_working(rho);
    const Matrix k2 = gen.apply_working(rho + 0.5 * dt * k1);
    const Matrix k3 = gen.apply_working(rho + 0.5 * dt * k2);
    const Matrix k4 = gen.apply_working(rho + dt * k3);
    rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    rho = 0.5 * (rho + rho.adjoint()).eval();
    record(n);
  }
  path.times.push_back(t_final);
  path.rhos.push_back(hermitize(gen.from_working(rho)));
  return path;
}

double stable_step(const Generator& gen, double t_final, double dt_max) {
  require(t_final > 0.0 && dt_max > 0.0, "stable_step needs positive T and dt_max");
  const double by_step = std::ceil(t_final / dt_max - 1e-9);
  const double by_norm = std::ceil(t_final * gen.norm() / kStabilityBound);
  const double n = std::max({1.0, by_step, by_norm});
  if (n > 1e8) fail(ErrorKind::capacity, "generator too stiff for RK4 within 1e8 steps");
  return t_final / n;
}

namespace {

Matrix uniform_superposition(int dim) {
  return Matrix::Constant(dim, dim, Complex(1.0 / dim, 0.0));
}

double relative_or_absolute(double diff, double scale) { return scale > 1e-300 ? diff / scale : diff; }

}  // namespace

BridgeReport jump_to_diffusion_bridge(const DiffusionConfig& base, std::span<const double> nus, double t_final,
                                      double tolerance, const MeterOptions& meter_options) {
  require(base.pointer != nullptr, "bridge needs a pointer state");
  require(!nus.empty(), "bridge needs at least one nu");
  for (std::size_t j = 0; j < nus.size(); ++j) {
    require(nus[j] > 0.0, "bridge nu values must be positive");
    if (j > 0) require(nus[j] > nus[j - 1], "bridge nu list must be increasing");
  }
  const NoiseCovariance cov = noise_covariance(*base.pointer, base.hbar);
  if (std::abs(cov.q0) > 1e-10 * std::max(1.0, std::sqrt(cov.sigma2))) {
    std::ostringstream os;
    os << "bridge requires q0 = 0 (got q0 = " << cov.q0 << "); the mean-field drift would dominate";
    fail(ErrorKind::validation, os.str());
  }
  const int m = base.particles;
  const HermitianOperator h_full = HermitianOperator::hermitized(
      tensor_hamiltonian(base.h.matrix(), base.pair_interaction ? &*base.pair_interaction : nullptr, m));

  MasterConfig diff;
  diff.h = h_full;
  diff.r = base.r;
  diff.pointer = base.pointer;
  diff.particles = m;
  diff.gamma = base.gamma;
  diff.hbar = base.hbar;
  diff.mode = MasterMode::diffusive;
  const Generator g_diff = make_generator(diff);
  const Matrix s_diff = g_diff.superoperator();
  const Matrix s_unitary = unitary_generator(h_full, base.hbar).superoperator();
  const double scale = max_abs(s_diff - s_unitary);

  const Matrix rho0 = uniform_superposition(h_full.dim());
  const Matrix rho_diff = rk4_solve(g_diff, rho0, t_final, stable_step(g_diff, t_final, 1e-3)).rhos.back();
  const double rho_scale = max_abs(rho_diff);

  BridgeReport report;
  report.tolerance = tolerance;
  for (double nu : nus) {
    MasterConfig jump = diff;
    jump.mode = MasterMode::jump_averaged;
    jump.nu = nu;
    const double kappa = base.gamma / std::sqrt(nu);
    jump.meter = std::make_shared<MeterModel>(kappa, base.r, *base.pointer, meter_options);
    const Generator g_jump = make_generator(jump);
    BridgeRow row;
    row.nu = nu;
    row.kappa = kappa;
    row.generator_error = relative_or_absolute(max_abs(g_jump.superoperator() - s_diff), scale);
    const Matrix rho_jump = rk4_solve(g_jump, rho0, t_final, stable_step(g_jump, t_final, 1e-3)).rhos.back();
    row.solution_error = relative_or_absolute(max_abs(rho_jump - rho_diff), rho_scale);
    report.rows.push_back(row);
  }
  report.monotone = true;
  for (std::size_t j = 1; j < report.rows.size(); ++j) {
    const double prev = report.rows[j - 1].generator_error;
    const double cur = report.rows[j].generator_error;
    // absolute roundoff grows like nu * eps, so errors this small count as zero
    const bool both_zero = prev <= 1e-10 && cur <= 1e-10;
    if (!(cur < prev) && !both_zero) report.monotone = false;
  }
  report.pass = report.monotone && report.rows.back().generator_error <= tolerance;
  return report;
}

MeanFieldReport mean_field_check(const DiffusionConfig& base, const StateVector& eta, std::span<const double> nus,
                                 double t_final, double tolerance, const MeterOptions& meter_options) {
  require(base.pointer != nullptr, "mean-field check needs a pointer state");
  require(base.particles == 1, "mean-field check is single-particle");
  require(!nus.empty(), "mean-field check needs at least one nu");
  const NoiseCovariance cov = noise_covariance(*base.pointer, base.hbar);
  const HermitianOperator effective =
      HermitianOperator::hermitized(base.h.matrix() - base.gamma * cov.q0 * base.r.matrix());
  const Matrix s_mf = unitary_generator(effective, base.hbar).superoperator();
  const Matrix s_free = unitary_generator(base.h, base.hbar).superoperator();
  const double potential_scale = max_abs(s_mf - s_free);
  const double scale = potential_scale > 1e-300 ? potential_scale : max_abs(s_mf);

  const Matrix rho0 = eta.amps() * eta.amps().adjoint();
  const StatePath mf = mean_field_evolve(base, eta, t_final);
  const Matrix rho_mf = mf.states.back().amps() * mf.states.back().amps().adjoint();

  MeanFieldReport report;
  report.q0 = cov.q0;
  report.tolerance = tolerance;
  for (double nu : nus) {
    require(nu > 0.0, "mean-field nu values must be positive");
    MasterConfig jump;
    jump.h = base.h;
    jump.hbar = base.hbar;
    jump.nu = nu;
    jump.gamma = base.gamma;
    jump.mode = MasterMode::jump_averaged;
    const double kappa = base.gamma / nu;
    jump.meter = std::make_shared<MeterModel>(kappa, base.r, *base.pointer, meter_options);
    const Generator g_jump = make_generator(jump);
    MeanFieldRow row;
    row.nu = nu;
    row.kappa = kappa;
    row.generator_error = relative_or_absolute(max_abs(g_jump.superoperator() - s_mf), scale);
    const Matrix rho_jump = rk4_solve(g_jump, rho0, t_final, stable_step(g_jump, t_final, 1e-3)).rhos.back();
    row.solution_error = max_abs(rho_jump - rho_mf);
    report.rows.push_back(row);
  }
  report.pass = report.rows.back().generator_error <= tolerance;
  return report;
}

}  // namespace qtraj
