#include <doctest.h>

#include <cmath>
#include <memory>
#include <unsupported/Eigen/MatrixFunctions>

#include "qtraj/jump.hpp"

using namespace qtraj;

namespace {

HermitianOperator diag2() { return HermitianOperator::diagonal(std::vector<double>{0.0, 1.0}); }

Matrix random_hermitian(int d, Rng& rng) {
  Matrix a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = Complex(rng.normal(), rng.normal());
  return 0.5 * (a + a.adjoint());
}

StateVector random_state(int d, Rng& rng) {
  Vector v(d);
  for (int i = 0; i < d; ++i) v(i) = Complex(rng.normal(), rng.normal());
  return StateVector(v).normalized();
}

Matrix expm_oracle(const Matrix& h, double t) { return Matrix(Complex(0.0, -t) * h).exp(); }

struct Moments {
  double mean, se;
};

Moments moments(const std::vector<double>& x) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return {m, std::sqrt(s / static_cast<double>(x.size() - 1) / static_cast<double>(x.size()))};
}

// upper 1% point of chi-square by the Wilson-Hilferty approximation
double chi2_critical_1pct(int dof) {
  const double z = 2.3263478740408408;
  const double k = dof;
  return k * std::pow(1.0 - 2.0 / (9.0 * k) + z * std::sqrt(2.0 / (9.0 * k)), 3);
}

// chi-square statistic of grid outcomes binned on [lo, hi) against a density
// given per grid point (times the grid weight)
double chi2_statistic(const MeterModel& m, const std::vector<int>& draws, const std::vector<double>& prob, double lo,
                      double hi, int bins) {
  std::vector<double> expected(bins + 2, 0.0), observed(bins + 2, 0.0);
  auto bin_of = [&](double x) {
    if (x < lo) return 0;
    if (x >= hi) return bins + 1;
    return 1 + static_cast<int>((x - lo) / (hi - lo) * bins);
  };
  for (int i = 0; i < m.grid_size(); ++i) expected[bin_of(m.lambda(i))] += prob[i] * static_cast<double>(draws.size());
  for (int i : draws) observed[bin_of(m.lambda(i))] += 1.0;
  double chi2 = 0.0;
  for (int b = 0; b < bins + 2; ++b)
    if (expected[b] > 0.0) chi2 += (observed[b] - expected[b]) * (observed[b] - expected[b]) / expected[b];
  return chi2;
}

}  // namespace

TEST_CASE("poisson event times") {
  Rng rng(31);
  CHECK(sample_poisson_times(0.0, 5.0, rng).empty());

  const int n = 100000;
  std::vector<double> counts(n), empty(n);
  for (int s = 0; s < n; ++s) {
    const auto times = sample_poisson_times(2.0, 1.0, rng);
    for (std::size_t k = 0; k < times.size(); ++k) {
      REQUIRE(times[k] >= 0.0);
      REQUIRE(times[k] < 1.0);
      if (k > 0) REQUIRE(times[k] > times[k - 1]);
    }
    counts[s] = static_cast<double>(times.size());
    empty[s] = times.empty() ? 1.0 : 0.0;
  }
  const Moments c = moments(counts);
  CHECK(std::abs(c.mean - 2.0) <= 3.0 * std::sqrt(2.0 / n));
  const double p0 = std::exp(-2.0);
  CHECK(std::abs(moments(empty).mean - p0) <= 3.0 * std::sqrt(p0 * (1.0 - p0) / n));
}

TEST_CASE("inverse cdf") {
  const std::vector<double> cum{0.1, 0.1, 0.6, 1.0};
  CHECK(inverse_cdf(cum, 0.0) == 0);
  CHECK(inverse_cdf(cum, 0.05) == 0);
  CHECK(inverse_cdf(cum, 0.1) == 2);  // zero-weight cell is never chosen
  CHECK(inverse_cdf(cum, 0.99) == 3);
}

TEST_CASE("POVM at a jump") {
  Rng rng(32);
  for (double kappa : {0.0, 0.3, 1.0}) {
    const HermitianOperator r(random_hermitian(3, rng));
    const MeterModel m = make_gaussian_meter(kappa, r, 2048);
    for (int rep = 0; rep < 5; ++rep) {
      const StateVector chi = random_state(3, rng);
      double total = 0.0;
      for (int i = 0; i < m.grid_size(); ++i)
        if (m.on_support(i)) total += (m.reduction_at(i) * chi.amps()).squaredNorm() * m.outcome_weights()[i];
      CHECK(std::abs(total - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("outcome sampling") {
  const int n = 100000;
  SUBCASE("kappa = 0 follows the input measure") {
    const MeterModel m = make_gaussian_meter(0.0, diag2());
    Rng rng(33);
    const StateVector chi = StateVector::from({0.6, 0.8});
    std::vector<int> draws(n);
    for (int s = 0; s < n; ++s) draws[s] = sample_outcome(m, chi, rng).index;
    const double chi2 = chi2_statistic(m, draws, m.outcome_weights(), -1.5, 1.5, 20);
    CHECK(chi2 <= chi2_critical_1pct(21));
  }
  SUBCASE("eigenvector gives the shifted packet") {
    const MeterModel m = make_gaussian_meter(0.8, diag2());
    Rng rng(34);
    std::vector<int> draws(n);
    for (int s = 0; s < n; ++s) draws[s] = sample_outcome(m, StateVector::basis(2, 1), rng).index;
    std::vector<double> prob(m.grid_size(), 0.0);
    double total = 0.0;
    for (int i = 0; i < m.grid_size(); ++i) {
      const double x = m.lambda(i) - 0.8;
      prob[i] = std::exp(-kPi * x * x) * m.pointer().weights()[i];
      total += prob[i];
    }
    for (double& p : prob) p /= total;
    CHECK(chi2_statistic(m, draws, prob, -0.7, 2.3, 20) <= chi2_critical_1pct(21));
    // variance of the shifted packet is 1/(2 pi)
    std::vector<double> x(n);
    for (int s = 0; s < n; ++s) x[s] = m.lambda(draws[s]);
    const Moments mx = moments(x);
    CHECK(std::abs(mx.mean - 0.8) <= 3.0 * mx.se);
  }
  SUBCASE("superposition gives the two-bump mixture") {
    const MeterModel m = make_gaussian_meter(1.2, diag2(), 2048);
    Rng rng(35);
    const StateVector chi = StateVector::from({1.0, 1.0}).normalized();
    std::vector<int> draws(n);
    for (int s = 0; s < n; ++s) draws[s] = sample_outcome(m, chi, rng).index;
    std::vector<double> prob(m.grid_size(), 0.0);
    double total = 0.0;
    for (int i = 0; i < m.grid_size(); ++i) {
      const double x = m.lambda(i);
      prob[i] = (0.5 * std::exp(-kPi * x * x) + 0.5 * std::exp(-kPi * (x - 1.2) * (x - 1.2))) * m.pointer().weights()[i];
      total += prob[i];
    }
    for (double& p : prob) p /= total;
    CHECK(chi2_statistic(m, draws, prob, -1.0, 2.2, 24) <= chi2_critical_1pct(25));
  }
}

TEST_CASE("jump trajectories") {
  Rng setup(36);
  auto meter = std::make_shared<const MeterModel>(make_gaussian_meter(0.5, diag2()));
  const StateVector eta = random_state(2, setup);

  SUBCASE("nu = 0 is free evolution") {
    const HermitianOperator h(random_hermitian(2, setup));
    const JumpConfig cfg{h, meter, 0.0, 1.0, 7, JumpMode::normalized};
    Rng rng(1);
    const Trajectory tr = evolve_jump(cfg, eta, 1.3, rng);
    CHECK(tr.events.empty());
    CHECK((tr.state.amps() - expm_oracle(h.matrix(), 1.3) * eta.amps()).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("eigenvector with H = 0 keeps its ray") {
    const JumpConfig cfg{HermitianOperator::zero(2), meter, 20.0, 1.0, 7, JumpMode::normalized};
    Rng rng(2);
    const Trajectory tr = evolve_jump(cfg, StateVector::basis(2, 1), 1.0, rng);
    CHECK(tr.events.size() > 5);
    CHECK(std::abs(std::abs(tr.state[1]) - 1.0) <= 1e-12);
    // outcomes come from the packet centered at kappa r = 0.5 with sd 0.28
    for (const auto& e : tr.events) CHECK(std::abs(e.lambda - 0.5) < 2.0);
  }
  SUBCASE("event times ordered and normalized states") {
    const HermitianOperator h(random_hermitian(2, setup));
    const JumpConfig cfg{h, meter, 10.0, 1.0, 7, JumpMode::normalized};
    const JumpEngine engine(cfg);
    const std::vector<double> ts{0.0, 0.5, 1.0};
    for (std::uint64_t i = 0; i < 50; ++i) {
      const Trajectory tr = engine.trajectory(eta, 1.0, i, ts);
      for (std::size_t k = 0; k < tr.events.size(); ++k) {
        CHECK(tr.events[k].t >= 0.0);
        CHECK(tr.events[k].t < 1.0);
        if (k > 0) CHECK(tr.events[k].t > tr.events[k - 1].t);
      }
      CHECK(std::abs(tr.state.norm2() - 1.0) <= 1e-10);
      REQUIRE(tr.samples.size() == 3);
      CHECK((tr.samples[2].amps() - tr.state.amps()).cwiseAbs().maxCoeff() <= 1e-14);
    }
  }
  SUBCASE("same index reproduces, different index differs") {
    const JumpConfig cfg{HermitianOperator(random_hermitian(2, setup)), meter, 10.0, 1.0, 99, JumpMode::normalized};
    const JumpEngine engine(cfg);
    const Trajectory a = engine.trajectory(eta, 1.0, 4), b = engine.trajectory(eta, 1.0, 4);
    const Trajectory c = engine.trajectory(eta, 1.0, 5);
    REQUIRE(a.events.size() == b.events.size());
    for (std::size_t k = 0; k < a.events.size(); ++k) {
      CHECK(a.events[k].t == b.events[k].t);
      CHECK(a.events[k].lambda == b.events[k].lambda);
    }
    CHECK(a.state.amps() == b.state.amps());
    CHECK(!(a.state.amps() == c.state.amps()));
  }
  SUBCASE("invalid inputs") {
    JumpConfig cfg{HermitianOperator::zero(2), meter, -1.0, 1.0, 1, JumpMode::normalized};
    CHECK_THROWS_AS(JumpEngine{cfg}, Error);
    cfg.nu = 1.0;
    Rng rng(3);
    CHECK_THROWS_AS(evolve_jump(cfg, StateVector::from({1.0, 1.0}), 1.0, rng), Error);
  }
}

TEST_CASE("ensemble laws of the jump engine") {
  Rng setup(37);
  auto meter = std::make_shared<const MeterModel>(make_gaussian_meter(0.5, diag2()));
  const HermitianOperator h = HermitianOperator(Matrix{{0.2, 0.7}, {0.7, -0.3}});
  const StateVector eta = random_state(2, setup);
  const int n = 20000;

  SUBCASE("linear mode is normalized in the mean") {
    // weights are close to lognormal with log-variance growing like nu kappa^2;
    // a weak meter keeps the standard error meaningful
    auto weak = std::make_shared<const MeterModel>(make_gaussian_meter(0.2, diag2()));
    const JumpEngine engine(JumpConfig{h, weak, 5.0, 1.0, 371, JumpMode::linear});
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) w[i] = engine.trajectory(eta, 1.0, i).state.norm2();
    const Moments m = moments(w);
    CHECK(std::abs(m.mean - 1.0) <= 3.0 * m.se);
  }
  SUBCASE("normalized mode counts are Poisson") {
    const JumpEngine engine(JumpConfig{h, meter, 5.0, 1.0, 372, JumpMode::normalized});
    std::vector<double> k(n);
    for (int i = 0; i < n; ++i) k[i] = static_cast<double>(engine.trajectory(eta, 1.0, i).events.size());
    const Moments m = moments(k);
    CHECK(std::abs(m.mean - 5.0) <= 3.0 * std::sqrt(5.0 / n));
  }
  SUBCASE("reweighted linear outcomes match normalized outcomes") {
    // first outcome statistics, conditioned on at least one event
    const JumpEngine lin(JumpConfig{h, meter, 3.0, 1.0, 373, JumpMode::linear});
    const JumpEngine nrm(JumpConfig{h, meter, 3.0, 1.0, 374, JumpMode::normalized});
    double sw = 0.0, swx = 0.0, swx2 = 0.0, sw2 = 0.0;
    std::vector<double> xn;
    for (int i = 0; i < n; ++i) {
      const Trajectory a = lin.trajectory(eta, 1.0, i);
      if (!a.events.empty()) {
        const double w = a.state.norm2(), x = a.events.front().lambda;
        sw += w;
        swx += w * x;
        swx2 += w * x * x;
        sw2 += w * w;
      }
      const Trajectory b = nrm.trajectory(eta, 1.0, i);
      if (!b.events.empty()) xn.push_back(b.events.front().lambda);
    }
    const double mean_lin = swx / sw;
    const double var_lin = swx2 / sw - mean_lin * mean_lin;
    const double se_lin = std::sqrt(var_lin * sw2) / sw;  // effective sample size of the weights
    const Moments mn = moments(xn);
    const double z = (mean_lin - mn.mean) / std::hypot(se_lin, mn.se);
    CHECK(std::abs(z) <= 2.58);
  }
}

TEST_CASE("stepwise and product forms agree") {
  Rng rng(38);
  const HermitianOperator h(random_hermitian(3, rng));
  const HermitianOperator r(random_hermitian(3, rng));
  auto meter = std::make_shared<const MeterModel>(make_gaussian_meter(0.4, r));
  const JumpConfig cfg{h, meter, 1.0, 1.0, 1, JumpMode::linear};
  const StateVector eta = random_state(3, rng);

  auto oracle = [&](const std::vector<JumpEvent>& events, double t_final) {
    Vector psi = eta.amps();
    double t = 0.0;
    for (const auto& e : events) {
      psi = expm_oracle(h.matrix(), e.t - t) * psi;
      psi = gaussian_reduction_closed_form(r, 0.4, e.lambda) * psi;
      t = e.t;
    }
    return Vector(expm_oracle(h.matrix(), t_final - t) * psi);
  };

  SUBCASE("empty list") {
    const ProductCheck pc = trajectory_product_check(cfg, {}, eta, 1.5);
    CHECK(pc.deviation <= 1e-10);
    CHECK((pc.step_state.amps() - oracle({}, 1.5)).cwiseAbs().maxCoeff() <= 1e-10);
  }
  SUBCASE("one event") {
    const std::vector<JumpEvent> ev{{0.4, meter->lambda(500), 500}};
    const ProductCheck pc = trajectory_product_check(cfg, ev, eta, 1.0);
    CHECK(pc.deviation <= 1e-10);
    CHECK((pc.step_state.amps() - oracle(ev, 1.0)).cwiseAbs().maxCoeff() <= 1e-8);
  }
  SUBCASE("five random events") {
    std::vector<JumpEvent> ev;
    double t = 0.0;
    for (int k = 0; k < 5; ++k) {
      t += 0.1 + 0.2 * rng.uniform();
      const int i = 420 + static_cast<int>(rng.uniform() * 180);
      ev.push_back({t, meter->lambda(i), i});
    }
    const ProductCheck pc = trajectory_product_check(cfg, ev, eta, 2.0);
    CHECK(pc.deviation <= 1e-10);
    CHECK((pc.step_state.amps() - oracle(ev, 2.0)).cwiseAbs().maxCoeff() / pc.step_state.amps().norm() <= 1e-8);
  }
}
