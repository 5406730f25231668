#include "qtraj/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qtraj {

NoiseCovariance noise_covariance(const PointerState& pointer, double hbar) {
  require(hbar > 0.0, "hbar must be positive");
  const auto& f = pointer.values();
  const auto& w = pointer.weights();
  const auto d1 = pointer.derivative();
  const int n = pointer.size();
  constexpr double kSupport = 1e-12;

  double peak = 0.0;
  for (const Complex& v : f) peak = std::max(peak, std::norm(v));
  int first = n, last = -1;
  for (int i = 0; i < n; ++i) {
    if (std::norm(f[i]) >= 1e-10 * peak) {
      first = std::min(first, i);
      last = i;
    }
  }
  for (int i = first; i <= last; ++i) {
    if (std::abs(f[i]) < kSupport) {
      std::ostringstream os;
      os << "pointer vanishes inside its bulk support at lambda = " << pointer.grid()[i]
         << "; osmotic velocity undefined";
      fail(ErrorKind::degenerate, os.str());
    }
  }

  Complex c1 = 0.0, mean_derivative = 0.0;
  double c2 = 0.0;
  for (int i = 0; i < n; ++i) {
    c2 += std::norm(d1[i]) * w[i];
    mean_derivative += std::conj(f[i]) * d1[i] * w[i];
    if (std::abs(f[i]) >= kSupport) c1 += std::conj(f[i]) / f[i] * d1[i] * d1[i] * w[i];
  }
  const double q0 = (kI * hbar * mean_derivative).real();
  return {c1, c2, q0, hbar * hbar * c2};
}

WienerIncrements::WienerIncrements(Complex c1, double c2) : c2_(c2) {
  require(c2 >= 0.0 && std::abs(c1) <= c2 * (1.0 + 1e-12), "noise covariance needs c2 >= |c1|");
  real_ = std::abs(c1 - Complex(c2, 0.0)) <= 1e-12 * std::max(1.0, c2);
  const double sxx = 0.5 * (c2 + c1.real());
  const double syy = 0.5 * (c2 - c1.real());
  const double sxy = 0.5 * c1.imag();
  l11_ = std::sqrt(std::max(sxx, 0.0));
  l21_ = l11_ > 0.0 ? sxy / l11_ : 0.0;
  l22_ = std::sqrt(std::max(syy - l21_ * l21_, 0.0));
}

Complex WienerIncrements::draw(Rng& rng, double dt) const {
  const double s = std::sqrt(dt);
  if (real_) return std::sqrt(c2_) * s * rng.normal();
  const double z1 = rng.normal();
  const double z2 = rng.normal();
  return {s * l11_ * z1, s * (l21_ * z1 + l22_ * z2)};
}

DiffusionEngine::DiffusionEngine(DiffusionConfig config) : config_(std::move(config)) {
  require(config_.pointer != nullptr, "diffusion config needs a pointer state");
  require(config_.dt > 0.0 && std::isfinite(config_.dt), "time step dt must be positive");
  require(config_.hbar > 0.0, "hbar must be positive");
  require(std::isfinite(config_.gamma), "gamma must be finite");
  require(config_.h.dim() == config_.r.dim(), "H and R dimensions differ");
  if (config_.particles < 1 || config_.particles > 4) fail(ErrorKind::capacity, "particle count M must be in 1..4");
  cov_ = noise_covariance(*config_.pointer, config_.hbar);
  require(cov_.sigma2 > 0.0, "pointer dispersion sigma^2 must be positive");
  v_noise_ = WienerIncrements(cov_.c1, cov_.c2);
  const int m = config_.particles;
  w_noise_ = WienerIncrements(static_cast<double>(m) * cov_.c1, m * cov_.c2);

  const int d = single_dim();
  dim_ = int_pow(d, m);
  r_eig_ = hermitian_eig(config_.r);
  const Matrix& vr = r_eig_.vectors;
  step_single_ = vr.adjoint() * propagator(config_.h, config_.dt, config_.hbar) * vr;

  hamiltonian_ = HermitianOperator::hermitized(
      tensor_hamiltonian(config_.h.matrix(), config_.pair_interaction ? &*config_.pair_interaction : nullptr, m));
  basis_ = vr;
  for (int k = 1; k < m; ++k) basis_ = kron(basis_, vr);
  step_many_ = basis_.adjoint() * propagator(hamiltonian_, config_.dt, config_.hbar) * basis_;

  std::vector<std::vector<double>> r_of(dim_, std::vector<double>(m));
  for (int a = 0; a < dim_; ++a) {
    int rest = a;
    for (int s = m - 1; s >= 0; --s) {
      r_of[a][s] = r_eig_.values(rest % d);
      rest /= d;
    }
  }
  r_mean_ = RealVector::Zero(dim_);
  r_square_sum_ = RealVector::Zero(dim_);
  r_cross_ = Eigen::MatrixXd::Zero(dim_, dim_);
  pair_dephasing_ = Eigen::MatrixXd::Zero(dim_, dim_);
  for (int a = 0; a < dim_; ++a) {
    for (int k = 0; k < m; ++k) {
      r_mean_(a) += r_of[a][k] / m;
      r_square_sum_(a) += r_of[a][k] * r_of[a][k];
    }
    for (int b = 0; b < dim_; ++b) {
      for (int k = 0; k < m; ++k) {
        r_cross_(a, b) += r_of[a][k] * r_of[b][k];
        for (int l = k + 1; l < m; ++l)
          pair_dephasing_(a, b) += (r_of[a][k] - r_of[a][l]) * (r_of[b][k] - r_of[b][l]);
      }
    }
  }
}

int DiffusionEngine::steps_for(double t_final) const {
  require(t_final > 0.0, "time horizon T must be positive");
  const double steps = t_final / config_.dt;
  const long long n = std::llround(steps);
  if (n < 1 || std::abs(steps - static_cast<double>(n)) > 1e-6) {
    std::ostringstream os;
    os << "T = " << t_final << " is not an integer multiple of dt = " << config_.dt;
    fail(ErrorKind::validation, os.str());
  }
  return static_cast<int>(n);
}

std::vector<long long> DiffusionEngine::sample_steps(double t_final, std::span<const double> sample_times) const {
  require(std::is_sorted(sample_times.begin(), sample_times.end()), "sample times must be ascending");
  std::vector<long long> steps;
  for (double ts : sample_times) {
    require(ts >= 0.0 && ts <= t_final * (1.0 + 1e-12), "sample times must lie in [0, T]");
    const double s = ts / config_.dt;
    const long long n = std::llround(s);
    if (std::abs(s - static_cast<double>(n)) > 1e-6) {
      std::ostringstream os;
      os << "sample time " << ts << " is not a multiple of dt = " << config_.dt;
      fail(ErrorKind::validation, os.str());
    }
    steps.push_back(n);
  }
  return steps;
}

namespace {

void check_growth(double norm2, double t) {
  if (!std::isfinite(norm2) || norm2 > 1e6) {
    std::ostringstream os;
    os << "diffusive integrator blew up at t = " << t << " (norm^2 = " << norm2 << "); reduce dt";
    fail(ErrorKind::numeric, os.str());
  }
}

}  // namespace

StatePath DiffusionEngine::diffusive_sse(const StateVector& eta, double t_final, Rng& rng,
                                         std::span<const double> sample_times) const {
  require(config_.particles == 1, "the diffusive wave equation is single-particle; use the density equation for M > 1");
  require(eta.dim() == single_dim(), "initial state dimension mismatch");
  require(eta.is_normalized(1e-10), "initial state must be normalized");
  const int steps = steps_for(t_final);
  const auto samples = sample_steps(t_final, sample_times);
  const int d = single_dim();
  const double g = config_.gamma, dt = config_.dt;
  const double drift = 0.5 * g * g * cov_.c2 * dt;

  StatePath path;
  Vector c = r_eig_.vectors.adjoint() * eta.amps();
  Vector scaled(d);
  std::size_t next = 0;
  auto record = [&](long long n) {
    while (next < samples.size() && samples[next] == n) {
      path.times.push_back(sample_times[next]);
      path.states.emplace_back(r_eig_.vectors * c);
      path.norm2.push_back(c.squaredNorm());
      ++next;
    }
  };
  record(0);
  for (int n = 1; n <= steps; ++n) {
    const Complex dv = v_noise_.draw(rng, dt);
    for (int k = 0; k < d; ++k) {
      const double r = r_eig_.values(k);
      scaled(k) = (1.0 - drift * r * r + g * dv * r) * c(k);
    }
    c.noalias() = step_single_.lazyProduct(scaled);
    check_growth(c.squaredNorm(), n * dt);
    record(n);
  }
  path.times.push_back(t_final);
  path.states.emplace_back(r_eig_.vectors * c);
  path.norm2.push_back(c.squaredNorm());
  return path;
}

StatePath DiffusionEngine::coupled_sse(const StateVector& eta, double t_final, Rng& rng,
                                       std::span<const double> sample_times) const {
  require(config_.particles == 1, "the coupled-system equation is implemented for M = 1");
  require(eta.dim() == single_dim(), "initial state dimension mismatch");
  require(eta.is_normalized(1e-10), "initial state must be normalized");
  const int steps = steps_for(t_final);
  const auto samples = sample_steps(t_final, sample_times);
  const int d = single_dim();
  const double dt = config_.dt;
  const double coupling = config_.gamma / config_.hbar;
  const double su = std::sqrt(cov_.sigma2 * dt);

  StatePath path;
  Vector c = r_eig_.vectors.adjoint() * eta.amps();
  Vector scaled(d);
  std::size_t next = 0;
  auto record = [&](long long n) {
    while (next < samples.size() && samples[next] == n) {
      path.times.push_back(sample_times[next]);
      path.states.emplace_back(r_eig_.vectors * c);
      path.norm2.push_back(c.squaredNorm());
      ++next;
    }
  };
  record(0);
  for (int n = 1; n <= steps; ++n) {
    const double du = su * rng.normal();
    // exp(i gamma R du / hbar) carries both the noise and its Ito correction
    for (int k = 0; k < d; ++k) scaled(k) = std::exp(kI * (coupling * r_eig_.values(k) * du)) * c(k);
    c.noalias() = step_single_.lazyProduct(scaled);
    record(n);
  }
  path.times.push_back(t_final);
  path.states.emplace_back(r_eig_.vectors * c);
  path.norm2.push_back(c.squaredNorm());
  return path;
}

DensityPath DiffusionEngine::diffusive_density(const DensityMatrix& rho0, double t_final, Rng& rng,
                                               std::span<const double> sample_times,
                                               DensityPathOptions options) const {
  require(rho0.dim() == dim_, "initial density matrix dimension mismatch");
  require(std::abs(rho0.trace() - 1.0) <= 1e-10, "initial density matrix must have unit trace");
  const int steps = steps_for(t_final);
  const auto samples = sample_steps(t_final, sample_times);
  const int m = config_.particles;
  const double g = config_.gamma, dt = config_.dt, c2 = cov_.c2;
  const Complex cw1 = static_cast<double>(m) * cov_.c1;

  Eigen::MatrixXd mean_multiplier(dim_, dim_);
  for (int a = 0; a < dim_; ++a)
    for (int b = 0; b < dim_; ++b)
      mean_multiplier(a, b) =
          1.0 - 0.5 * g * g * c2 * (r_square_sum_(a) + r_square_sum_(b)) * dt + g * g * c2 * dt * r_cross_(a, b);

  DensityPath path;
  Matrix rho = basis_.adjoint() * rho0.matrix() * basis_;
  Matrix tmp(dim_, dim_);
  Matrix multiplier(dim_, dim_);
  const Matrix step_many_adj = step_many_.adjoint();
  Vector a_diag(dim_);
  std::size_t next = 0;

  auto check_positive = [&](const Matrix& rho_r, double t) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(rho_r, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues()(0);
    const double scale = std::max(std::abs(rho_r.trace().real()), 1e-300);
    if (lo < -1e-6 * scale) {
      std::ostringstream os;
      os << "density integrator lost positivity at t = " << t << " (min eigenvalue " << lo << "); reduce dt";
      fail(ErrorKind::numeric, os.str());
    }
    return lo;
  };
  auto record_state = [&](double t_label, double t) {
    const Matrix out = hermitize(basis_ * rho * basis_.adjoint());
    path.times.push_back(t_label);
    path.traces.push_back(out.trace().real());
    path.min_eigenvalues.push_back(check_positive(rho, t));
    path.rhos.push_back(out);
  };
  auto record = [&](long long n) {
    while (next < samples.size() && samples[next] == n) {
      record_state(sample_times[next], n * dt);
      ++next;
    }
  };

  record(0);
  for (int n = 1; n <= steps; ++n) {
    if (!options.noise) {
      rho.array() *= mean_multiplier.array().cast<Complex>();
    } else {
      const Complex dw = w_noise_.draw(rng, dt);
      if (options.scheme == DensityScheme::positive) {
        const Complex second = 0.5 * g * g * (dw * dw - cw1 * dt);
        for (int a = 0; a < dim_; ++a) {
          const double r = r_mean_(a);
          a_diag(a) = 1.0 - 0.5 * g * g * c2 * r_square_sum_(a) * dt + g * dw * r + second * r * r;
        }
        const double pair_rate = g * g * c2 * dt / m;
        for (int b = 0; b < dim_; ++b)
          for (int a = 0; a < dim_; ++a) multiplier(a, b) = a_diag(a) * std::conj(a_diag(b));
        if (m > 1) multiplier.real() += pair_rate * pair_dephasing_;
      } else {
        for (int a = 0; a < dim_; ++a)
          for (int b = 0; b < dim_; ++b)
            multiplier(a, b) = mean_multiplier(a, b) + g * (dw * r_mean_(a) + std::conj(dw) * r_mean_(b));
      }
      rho.array() *= multiplier.array();
    }
    tmp.noalias() = step_many_.lazyProduct(rho);
    rho.noalias() = tmp.lazyProduct(step_many_adj);
    for (int b = 0; b < dim_; ++b) {
      rho(b, b) = rho(b, b).real();
      for (int a = b + 1; a < dim_; ++a) {
        const Complex v = 0.5 * (rho(a, b) + std::conj(rho(b, a)));
        rho(a, b) = v;
        rho(b, a) = std::conj(v);
      }
    }
    check_growth(rho.trace().real(), n * dt);
    if (options.noise && options.scheme == DensityScheme::euler_maruyama) check_positive(rho, n * dt);
    record(n);
  }
  record_state(t_final, t_final);
  return path;
}

StatePath evolve_diffusive_sse(const DiffusionConfig& cfg, const StateVector& eta, double t_final, Rng& rng,
                               std::span<const double> sample_times) {
  return DiffusionEngine(cfg).diffusive_sse(eta, t_final, rng, sample_times);
}

StatePath evolve_coupled_sse(const DiffusionConfig& cfg, const StateVector& eta, double t_final, Rng& rng,
                             std::span<const double> sample_times) {
  return DiffusionEngine(cfg).coupled_sse(eta, t_final, rng, sample_times);
}

DensityPath evolve_diffusive_density(const DiffusionConfig& cfg, const DensityMatrix& rho0, double t_final, Rng& rng,
                                     std::span<const double> sample_times, DensityPathOptions options) {
  return DiffusionEngine(cfg).diffusive_density(rho0, t_final, rng, sample_times, options);
}

StatePath mean_field_evolve(const DiffusionConfig& cfg, const StateVector& eta, double t_final,
                            std::span<const double> sample_times) {
  require(cfg.pointer != nullptr, "mean-field evolution needs a pointer state");
  require(eta.dim() == cfg.h.dim() && cfg.r.dim() == cfg.h.dim(), "dimension mismatch");
  require(t_final >= 0.0, "time horizon must be nonnegative");
  const NoiseCovariance cov = noise_covariance(*cfg.pointer, cfg.hbar);
  const HermitianOperator effective =
      HermitianOperator::hermitized(cfg.h.matrix() - cfg.gamma * cov.q0 * cfg.r.matrix());
  const Propagator u(effective, cfg.hbar);
  StatePath path;
  auto push = [&](double t) {
    path.times.push_back(t);
    path.states.emplace_back(u.apply(eta.amps(), t));
    path.norm2.push_back(path.states.back().norm2());
  };
  for (double ts : sample_times) push(ts);
  push(t_final);
  return path;
}

}  // namespace qtraj
