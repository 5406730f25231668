#include "qtraj/jump.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qtraj {

std::vector<double> sample_poisson_times(double nu, double t_final, Rng& rng) {
  require(nu >= 0.0 && std::isfinite(nu), "jump intensity nu must be >= 0");
  require(t_final > 0.0, "time horizon T must be positive");
  std::vector<double> times;
  if (nu == 0.0) return times;
  double t = rng.exponential(nu);
  while (t < t_final) {
    times.push_back(t);
    t += rng.exponential(nu);
  }
  return times;
}

int inverse_cdf(std::span<const double> cumulative, double u) {
  const double target = u * cumulative.back();
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
  if (it == cumulative.end()) --it;
  // skip zero-weight bins that share the cumulative value of their predecessor
  int i = static_cast<int>(it - cumulative.begin());
  while (i > 0 && cumulative[i] == cumulative[i - 1]) --i;
  return i;
}

namespace {

// w_i ||G_i chi||^2 for chi given by R-eigenbasis coordinates c.
std::vector<double> outcome_cumulative(const MeterModel& meter, const Vector& c) {
  const Matrix& g = meter.reduction_table();
  const auto& w = meter.outcome_weights();
  const int n = meter.grid_size();
  const int d = meter.dim();
  RealVector pop(d);
  for (int k = 0; k < d; ++k) pop(k) = std::norm(c(k));
  std::vector<double> cumulative(n);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    if (w[i] > 0.0) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += std::norm(g(i, k)) * pop(k);
      acc += w[i] * s;
    }
    cumulative[i] = acc;
  }
  return cumulative;
}

Outcome draw_from(const MeterModel& meter, const std::vector<double>& cumulative, Rng& rng) {
  if (!(cumulative.back() > 1e-300)) fail(ErrorKind::degenerate, "all outcome weights vanish: degenerate state");
  const int i = inverse_cdf(cumulative, rng.uniform());
  return {i, meter.lambda(i)};
}

}  // namespace

Outcome sample_outcome(const MeterModel& meter, const StateVector& chi, Rng& rng) {
  require(chi.dim() == meter.dim(), "sample_outcome: dimension mismatch");
  const Vector c = meter.r_eigen().vectors.adjoint() * chi.amps();
  return draw_from(meter, outcome_cumulative(meter, c), rng);
}

JumpEngine::JumpEngine(JumpConfig config) : config_(std::move(config)) {
  require(config_.meter != nullptr, "jump config needs a meter model");
  require(config_.nu >= 0.0 && std::isfinite(config_.nu), "jump intensity nu must be >= 0");
  require(config_.hbar > 0.0, "hbar must be positive");
  require(config_.h.dim() == config_.meter->dim(), "H and R dimensions differ");
  free_ = Propagator(config_.h, config_.hbar);
  const Matrix& vr = config_.meter->r_eigen().vectors;
  const Matrix& vh = free_.eigensystem().vectors;
  r_vectors_adj_ = vr.adjoint();
  r_to_h_ = vh.adjoint() * vr;
  h_to_r_ = vr.adjoint() * vh;
  const auto& w = config_.meter->outcome_weights();
  cumulative_mu0_.resize(w.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) cumulative_mu0_[i] = (acc += w[i]);
}

Vector JumpEngine::evolve_free(const Vector& c, double dt) const {
  if (dt == 0.0) return c;
  Vector h = r_to_h_ * c;
  h = h.cwiseProduct(free_.phases(dt));
  return h_to_r_ * h;
}

Trajectory JumpEngine::run(const StateVector& eta, double t_final, Rng& rng, std::span<const double> sample_times) const {
  require(eta.dim() == dim(), "initial state dimension mismatch");
  require(eta.is_normalized(1e-10), "initial state must be normalized");
  require(std::is_sorted(sample_times.begin(), sample_times.end()), "sample times must be ascending");
  for (double ts : sample_times) require(ts >= 0.0 && ts <= t_final, "sample times must lie in [0, T]");

  const MeterModel& m = meter();
  Trajectory traj;
  traj.t_final = t_final;
  traj.mode = config_.mode;
  traj.sample_times.assign(sample_times.begin(), sample_times.end());

  const std::vector<double> times = sample_poisson_times(config_.nu, t_final, rng);
  Vector c = to_r_basis(eta.amps());
  double t = 0.0;
  std::size_t next_sample = 0;
  auto record_until = [&](double limit, bool inclusive) {
    while (next_sample < sample_times.size() &&
           (sample_times[next_sample] < limit || (inclusive && sample_times[next_sample] <= limit))) {
      traj.samples.emplace_back(from_r_basis(evolve_free(c, sample_times[next_sample] - t)));
      ++next_sample;
    }
  };

  double log_weight = 0.0;
  for (double te : times) {
    record_until(te, true);
    c = evolve_free(c, te - t);
    t = te;
    Outcome out{};
    if (config_.mode == JumpMode::normalized) {
      out = draw_from(m, outcome_cumulative(m, c), rng);
      c = c.cwiseProduct(m.reduction_table().row(out.index).transpose());
      const double n = c.norm();
      if (!(n > 1e-150)) fail(ErrorKind::degenerate, "state collapsed to zero after a jump");
      c /= n;
    } else {
      const int i = inverse_cdf(cumulative_mu0_, rng.uniform());
      out = {i, m.lambda(i)};
      c = c.cwiseProduct(m.reduction_table().row(i).transpose());
      const double n2 = c.squaredNorm();
      if (!(n2 > 1e-300) || !std::isfinite(n2)) fail(ErrorKind::degenerate, "linear state left the representable range");
    }
    traj.events.push_back({te, out.lambda, out.index});
  }
  record_until(t_final, true);
  c = evolve_free(c, t_final - t);
  if (config_.mode == JumpMode::linear) log_weight = std::log(c.squaredNorm());
  traj.state = StateVector(from_r_basis(c));
  traj.log_weight = log_weight;
  return traj;
}

Trajectory JumpEngine::trajectory(const StateVector& eta, double t_final, std::uint64_t index,
                                  std::span<const double> sample_times) const {
  Rng rng = Rng::stream(config_.seed, index);
  return run(eta, t_final, rng, sample_times);
}

StateVector JumpEngine::propagate_events(const StateVector& eta, std::span<const JumpEvent> events,
                                         double t_final) const {
  require(eta.dim() == dim(), "initial state dimension mismatch");
  Vector c = to_r_basis(eta.amps());
  double t = 0.0;
  for (const JumpEvent& e : events) {
    require(e.t >= t && e.t < t_final, "events must be chronological and inside [0, T)");
    c = evolve_free(c, e.t - t);
    t = e.t;
    const Vector g = (e.grid_index >= 0 && meter().on_support(e.grid_index))
                         ? Vector(meter().reduction_table().row(e.grid_index).transpose())
                         : meter().reduction_factors(e.lambda);
    c = c.cwiseProduct(g);
  }
  c = evolve_free(c, t_final - t);
  return StateVector(from_r_basis(c));
}

Trajectory evolve_jump(const JumpConfig& cfg, const StateVector& eta, double t_final, Rng& rng,
                       std::span<const double> sample_times) {
  return JumpEngine(cfg).run(eta, t_final, rng, sample_times);
}

ProductCheck trajectory_product_check(const JumpConfig& cfg, std::span<const JumpEvent> events, const StateVector& eta,
                                      double t_final) {
  const JumpEngine engine(cfg);
  StateVector step = engine.propagate_events(eta, events, t_final);

  Vector psi = eta.amps();
  double t = 0.0;
  for (const JumpEvent& e : events) {
    psi = propagator(cfg.h, e.t - t, cfg.hbar) * psi;
    psi = cfg.meter->reduction(e.lambda) * psi;
    t = e.t;
  }
  psi = propagator(cfg.h, t_final - t, cfg.hbar) * psi;
  StateVector product(psi);
  const double dev = (step.amps() - product.amps()).cwiseAbs().maxCoeff();
  return {std::move(step), std::move(product), dev};
}

}  // namespace qtraj
