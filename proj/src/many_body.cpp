#include "qtraj/many_body.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qtraj {

Matrix nearest_neighbor_coupling(int d, double coupling) {
  Matrix w = Matrix::Zero(d * d, d * d);
  for (int s = 0; s < d; ++s)
    for (int t = 0; t < d; ++t)
      if (std::abs(s - t) == 1) w(s * d + t, s * d + t) = coupling;
  return w;
}

Matrix many_body_hamiltonian(const ManyBodyConfig& cfg) {
  require(cfg.particles >= 1 && cfg.particles <= 4, "particle count M must be in 1..4");
  return tensor_hamiltonian(cfg.h_single.matrix(), cfg.pair_interaction ? &*cfg.pair_interaction : nullptr,
                            cfg.particles);
}

ManyBodySystem::ManyBodySystem(ManyBodyConfig config) : config_(std::move(config)) {
  require(config_.meter != nullptr, "many-body config needs a meter model");
  if (config_.particles < 1 || config_.particles > 4) fail(ErrorKind::capacity, "particle count M must be in 1..4");
  require(config_.nu >= 0.0 && std::isfinite(config_.nu), "jump intensity nu must be >= 0");
  require(config_.hbar > 0.0, "hbar must be positive");
  const int d = meter().dim();
  require(config_.h_single.dim() == d, "single-particle H and R dimensions differ");
  dim_ = int_pow(d, config_.particles);
  hamiltonian_ = HermitianOperator::hermitized(many_body_hamiltonian(config_));
  free_ = Propagator(hamiltonian_, config_.hbar);

  basis_ = meter().r_eigen().vectors;
  for (int k = 1; k < config_.particles; ++k) basis_ = kron(basis_, meter().r_eigen().vectors);
  h_to_r_ = basis_.adjoint() * free_.eigensystem().vectors;

  digits_.resize(dim_);
  for (int a = 0; a < dim_; ++a) {
    digits_[a].resize(config_.particles);
    int rest = a;
    for (int s = config_.particles - 1; s >= 0; --s) {
      digits_[a][s] = rest % d;
      rest /= d;
    }
  }

  const Matrix& g = meter().reduction_table();
  const int n = meter().grid_size();
  effect_ = Eigen::MatrixXd::Zero(n, dim_);
  for (int i = 0; i < n; ++i) {
    if (!meter().on_support(i)) continue;
    for (int a = 0; a < dim_; ++a) {
      double s = 0.0;
      for (int k = 0; k < config_.particles; ++k) s += std::norm(g(i, digits_[a][k]));
      effect_(i, a) = s / config_.particles;
    }
  }
  const auto& w = meter().outcome_weights();
  cumulative_mu0_.resize(w.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) cumulative_mu0_[i] = (acc += w[i]);
}

DensityMatrix ManyBodySystem::prepare(const DensityMatrix& rho0) const {
  require(rho0.dim() == dim_, "initial density matrix dimension mismatch");
  if (config_.sector == Sector::full_tensor) return rho0;
  const Matrix p = symmetric_projector(config_.particles, single_dim());
  const Matrix projected = p * rho0.matrix() * p;
  if (!(projected.trace().real() > 1e-14)) fail(ErrorKind::degenerate, "initial state has no symmetric component");
  return DensityMatrix::trusted(projected / projected.trace().real());
}

Matrix ManyBodySystem::evolve_free(const Matrix& rho, double dt) const {
  if (dt == 0.0) return rho;
  const Vector ph = free_.phases(dt);
  Matrix h = h_to_r_.adjoint() * rho * h_to_r_;
  for (int a = 0; a < dim_; ++a)
    for (int b = 0; b < dim_; ++b) h(a, b) *= ph(a) * std::conj(ph(b));
  return h_to_r_ * h * h_to_r_.adjoint();
}

void ManyBodySystem::apply_mixing(Matrix& rho, int grid_index) const {
  const auto g = meter().reduction_table().row(grid_index);
  const int m = config_.particles;
  for (int a = 0; a < dim_; ++a) {
    for (int b = 0; b < dim_; ++b) {
      Complex s = 0.0;
      for (int k = 0; k < m; ++k) s += g(digits_[a][k]) * std::conj(g(digits_[b][k]));
      rho(a, b) *= s / static_cast<double>(m);
    }
  }
}

DensityTrajectory ManyBodySystem::run(const DensityMatrix& rho0, double t_final, JumpMode mode, Rng& rng,
                                      std::span<const double> sample_times) const {
  require(rho0.dim() == dim_, "initial density matrix dimension mismatch");
  require(std::abs(rho0.trace() - 1.0) <= 1e-10, "initial density matrix must have unit trace");
  require(std::is_sorted(sample_times.begin(), sample_times.end()), "sample times must be ascending");
  for (double ts : sample_times) require(ts >= 0.0 && ts <= t_final, "sample times must lie in [0, T]");

  const DensityMatrix start = prepare(rho0);
  DensityTrajectory traj;
  traj.mode = mode;
  traj.sample_times.assign(sample_times.begin(), sample_times.end());
  const int d = single_dim();
  const int m = config_.particles;

  auto record = [&](const Matrix& rho_r) {
    const Matrix rho = hermitize(from_product_basis(rho_r));
    traj.samples.push_back(rho);
    traj.traces.push_back(rho.trace().real());
    traj.entropy_series.push_back(von_neumann_entropy(rho));
    Eigen::SelfAdjointEigenSolver<Matrix> es(rho, Eigen::EigenvaluesOnly);
    traj.min_eigenvalues.push_back(es.eigenvalues()(0));
    traj.permutation_defects.push_back(permutation_symmetry_check(rho, m, d));
  };

  const std::vector<double> times = sample_poisson_times(m * config_.nu, t_final, rng);
  Matrix rho = to_product_basis(start.matrix());
  double t = 0.0;
  std::size_t next_sample = 0;
  auto record_until = [&](double limit) {
    while (next_sample < sample_times.size() && sample_times[next_sample] <= limit) {
      record(evolve_free(rho, sample_times[next_sample] - t));
      ++next_sample;
    }
  };

  for (double te : times) {
    record_until(te);
    rho = evolve_free(rho, te - t);
    t = te;
    int i = 0;
    if (mode == JumpMode::normalized) {
      const auto& w = meter().outcome_weights();
      std::vector<double> cumulative(meter().grid_size());
      double acc = 0.0;
      for (int j = 0; j < meter().grid_size(); ++j) {
        if (w[j] > 0.0) {
          double s = 0.0;
          for (int a = 0; a < dim_; ++a) s += effect_(j, a) * rho(a, a).real();
          acc += w[j] * s;
        }
        cumulative[j] = acc;
      }
      if (!(acc > 1e-300)) fail(ErrorKind::degenerate, "all outcome weights vanish: degenerate density matrix");
      i = inverse_cdf(cumulative, rng.uniform());
      apply_mixing(rho, i);
      const double tr = rho.trace().real();
      if (!(tr > 1e-300)) fail(ErrorKind::degenerate, "trace collapsed after a mixing event");
      rho /= tr;
    } else {
      i = inverse_cdf(cumulative_mu0_, rng.uniform());
      apply_mixing(rho, i);
      const double tr = rho.trace().real();
      if (!(tr > 1e-300) || !std::isfinite(tr)) fail(ErrorKind::degenerate, "trace collapsed after a mixing event");
    }
    traj.events.push_back({te, meter().lambda(i), i});
    if (traj.events.size() == 1) traj.first_event_entropy = von_neumann_entropy(rho);
  }
  record_until(t_final);
  rho = evolve_free(rho, t_final - t);
  const Matrix out = hermitize(from_product_basis(rho));
  traj.rho = DensityMatrix::trusted(out);
  if (mode == JumpMode::linear) traj.log_weight = std::log(out.trace().real());
  return traj;
}

DensityTrajectory ManyBodySystem::trajectory(const DensityMatrix& rho0, double t_final, JumpMode mode,
                                             std::uint64_t index, std::span<const double> sample_times) const {
  Rng rng = Rng::stream(config_.seed, index);
  return run(rho0, t_final, mode, rng, sample_times);
}

DensityTrajectory evolve_density(const ManyBodySystem& sys, const DensityMatrix& rho0, double t_final, JumpMode mode,
                                 Rng& rng, std::span<const double> sample_times) {
  return sys.run(rho0, t_final, mode, rng, sample_times);
}

Matrix ManyBodySystem::mixing_step(const Matrix& rho, int grid_index) const {
  require(rho.rows() == dim_ && rho.cols() == dim_, "mixing_step: dimension mismatch");
  require(grid_index >= 0 && grid_index < meter().grid_size(), "mixing_step: grid index out of range");
  Matrix rho_r = to_product_basis(rho);
  apply_mixing(rho_r, grid_index);
  return from_product_basis(rho_r);
}

DensityMatrix mixing_reduction(const ManyBodySystem& sys, const DensityMatrix& rho, double lambda) {
  require(rho.dim() == sys.dim(), "mixing_reduction: dimension mismatch");
  const Matrix g = sys.meter().reduction(lambda);
  const int m = sys.particles();
  Matrix out = Matrix::Zero(sys.dim(), sys.dim());
  for (int k = 1; k <= m; ++k) {
    const Matrix gk = embed_at_slot(g, k, m);
    out += gk * rho.matrix() * gk.adjoint();
  }
  return DensityMatrix::trusted(out / static_cast<double>(m));
}

DensityMatrix mixing_brute_force_oracle(const ManyBodySystem& sys, const DensityMatrix& rho,
                                        std::span<const double> lambdas) {
  require(rho.dim() == sys.dim(), "mixing oracle: dimension mismatch");
  const int n = static_cast<int>(lambdas.size());
  if (n > 6) fail(ErrorKind::capacity, "mixing oracle enumerates M^n label sequences; n <= 6");
  const int m = sys.particles();
  std::vector<std::vector<Matrix>> gk(n);
  for (int j = 0; j < n; ++j) {
    const Matrix g = sys.meter().reduction(lambdas[j]);
    for (int k = 1; k <= m; ++k) gk[j].push_back(embed_at_slot(g, k, m));
  }
  const int sequences = int_pow(m, n);
  Matrix sum = Matrix::Zero(sys.dim(), sys.dim());
  std::vector<int> labels(n, 0);
  for (int s = 0; s < sequences; ++s) {
    int rest = s;
    for (int j = 0; j < n; ++j) {
      labels[j] = rest % m;
      rest /= m;
    }
    Matrix product = Matrix::Identity(sys.dim(), sys.dim());
    for (int j = 0; j < n; ++j) product = gk[j][labels[j]] * product;
    sum += product * rho.matrix() * product.adjoint();
  }
  return DensityMatrix::trusted(sum / static_cast<double>(sequences));
}

double permutation_symmetry_check(const Matrix& rho, int particles, int d) {
  require(rho.rows() == int_pow(d, particles), "permutation check: dimension is not d^M");
  double defect = 0.0;
  for (int a = 0; a < particles; ++a) {
    for (int b = a + 1; b < particles; ++b) {
      const Matrix p = transposition_operator(a, b, particles, d);
      defect = std::max(defect, max_abs(p * rho * p.adjoint() - rho));
    }
  }
  return defect;
}

}  // namespace qtraj
