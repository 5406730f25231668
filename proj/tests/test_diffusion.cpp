#include <doctest.h>

#include <cmath>
#include <memory>
#include <unsupported/Eigen/MatrixFunctions>

#include "qtraj/diffusion.hpp"

using namespace qtraj;

namespace {

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

Matrix kron_naive(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

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

HermitianOperator diag(std::vector<double> v) { return HermitianOperator::diagonal(v); }

DiffusionConfig config(const HermitianOperator& h, const HermitianOperator& r, double gamma, double dt,
                       std::uint64_t seed, double modulation = 0.0) {
  DiffusionConfig c;
  c.h = h;
  c.r = r;
  c.gamma = gamma;
  c.pointer = std::make_shared<const PointerState>(gaussian_pointer(1024, 6.0, modulation));
  c.dt = dt;
  c.seed = seed;
  return c;
}

// exp(t L) for d rho/dt = -i[H, rho] - 1/2 g2 [R, [R, rho]], column-stacked vec
Matrix dephasing_oracle(const Matrix& h, const Matrix& r, double g2, const Matrix& rho, double t) {
  const int d = static_cast<int>(h.rows());
  const Matrix id = Matrix::Identity(d, d);
  const Matrix r2 = r * r;
  const Matrix l = Complex(0.0, -1.0) * (kron_naive(id, h) - kron_naive(h.transpose(), id)) -
                   0.5 * g2 * (kron_naive(id, r2) + kron_naive(r2.transpose(), id) - 2.0 * kron_naive(r.transpose(), r));
  const Matrix prop = Matrix(t * l).exp();
  Vector v(d * d);
  for (int b = 0; b < d; ++b)
    for (int a = 0; a < d; ++a) v(a + d * b) = rho(a, b);
  const Vector out = prop * v;
  Matrix res(d, d);
  for (int b = 0; b < d; ++b)
    for (int a = 0; a < d; ++a) res(a, b) = out(a + d * b);
  return res;
}

}  // namespace

TEST_CASE("noise covariance") {
  SUBCASE("Gaussian pointer") {
    const NoiseCovariance c = noise_covariance(gaussian_pointer(2048, 6.0));
    CHECK(std::abs(c.c1 - Complex(kPi / 2.0, 0.0)) <= 1e-6);
    CHECK(std::abs(c.c2 - kPi / 2.0) <= 1e-6);
    CHECK(std::abs(c.q0) <= 1e-12);
    CHECK(std::abs(c.sigma2 - kPi / 2.0) <= 1e-6);
    const NoiseCovariance h2 = noise_covariance(gaussian_pointer(2048, 6.0), 2.0);
    CHECK(std::abs(h2.sigma2 - 4.0 * kPi / 2.0) <= 4e-6);
    CHECK(std::abs(h2.c2 - kPi / 2.0) <= 1e-6);
  }
  SUBCASE("phase-modulated pointer") {
    // L' = pi lambda - i a, so c1 = pi/2 - a^2, c2 = pi/2 + a^2, q0 = -hbar a
    for (double a : {0.3, 1.0}) {
      const NoiseCovariance c = noise_covariance(gaussian_pointer(2048, 6.0, a));
      CHECK(std::abs(c.c1 - Complex(kPi / 2.0 - a * a, 0.0)) <= 1e-6);
      CHECK(std::abs(c.c2 - (kPi / 2.0 + a * a)) <= 1e-6);
      CHECK(std::abs(c.q0 + a) <= 1e-9);
      CHECK(c.c2 >= std::abs(c.c1));
    }
  }
  SUBCASE("any real tabulated pointer has q0 = 0") {
    std::vector<double> grid(801);
    std::vector<Complex> vals(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      grid[i] = -8.0 + 0.02 * static_cast<double>(i);
      vals[i] = 1.0 / std::cosh(1.7 * grid[i]) * (1.0 + 0.2 * std::tanh(grid[i]));
    }
    const NoiseCovariance c = noise_covariance(PointerState::from_table(grid, vals));
    CHECK(std::abs(c.q0) <= 1e-14);
    CHECK(std::abs(c.c1.real() - c.c2) <= 1e-3 * c.c2);
  }
  SUBCASE("zeros inside the bulk") {
    std::vector<double> grid(801);
    std::vector<Complex> vals(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      grid[i] = -8.0 + 0.02 * static_cast<double>(i);
      vals[i] = grid[i] * std::exp(-kPi * grid[i] * grid[i] / 2.0);
    }
    try {
      noise_covariance(PointerState::from_table(grid, vals));
      FAIL("expected a degenerate error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::degenerate);
    }
  }
}

TEST_CASE("Wiener increments") {
  const int n = 1000000;
  const double dt = 1e-2;
  SUBCASE("real case") {
    const WienerIncrements w(Complex(kPi / 2.0, 0.0), kPi / 2.0);
    CHECK(w.is_real());
    Rng rng(51);
    std::vector<double> sq(n);
    for (int i = 0; i < n; ++i) {
      const Complex v = w.draw(rng, dt);
      REQUIRE(v.imag() == 0.0);
      sq[i] = v.real() * v.real();
    }
    const Moments m = moments(sq);
    CHECK(std::abs(m.mean - kPi / 2.0 * dt) <= 3.0 * m.se);
  }
  SUBCASE("complex case") {
    const Complex c1(0.4, 0.3);
    const double c2 = 1.3;
    const WienerIncrements w(c1, c2);
    CHECK(!w.is_real());
    Rng rng(52);
    std::vector<double> re(n), im(n), ab(n);
    for (int i = 0; i < n; ++i) {
      const Complex v = w.draw(rng, dt);
      const Complex vv = v * v;
      re[i] = vv.real();
      im[i] = vv.imag();
      ab[i] = std::norm(v);
    }
    const Moments mr = moments(re), mi = moments(im), ma = moments(ab);
    CHECK(std::abs(mr.mean - c1.real() * dt) <= 3.0 * mr.se);
    CHECK(std::abs(mi.mean - c1.imag() * dt) <= 3.0 * mi.se);
    CHECK(std::abs(ma.mean - c2 * dt) <= 3.0 * ma.se);
  }
  CHECK_THROWS_AS(WienerIncrements(Complex(2.0, 0.0), 1.0), Error);
}

TEST_CASE("diffusive wave equation") {
  Rng setup(53);
  const HermitianOperator h(random_hermitian(2, setup));
  const StateVector eta = random_state(2, setup);

  SUBCASE("gamma = 0 is unitary") {
    const DiffusionConfig cfg = config(h, diag({0.0, 1.0}), 0.0, 1e-3, 1);
    Rng rng(1);
    const std::vector<double> ts{0.0, 0.25, 0.5};
    const StatePath p = evolve_diffusive_sse(cfg, eta, 0.5, rng, ts);
    for (std::size_t k = 0; k < p.times.size(); ++k) {
      CHECK(std::abs(p.norm2[k] - 1.0) <= 1e-12);
      const Vector exact = Matrix(Complex(0.0, -p.times[k]) * h.matrix()).exp() * eta.amps();
      CHECK((p.states[k].amps() - exact).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
  SUBCASE("scalar R gives a scalar martingale") {
    const DiffusionConfig cfg = config(h, diag({0.7, 0.7}), 0.8, 1e-3, 2);
    const DiffusionEngine engine(cfg);
    const int n = 4000;
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) {
      Rng rng = Rng::stream(cfg.seed, i);
      const StatePath p = engine.diffusive_sse(eta, 1.0, rng, {});
      w[i] = p.norm2.back();
      // the direction follows free evolution exactly, only the norm fluctuates
      if (i < 5) {
        const Vector exact = Matrix(Complex(0.0, -1.0) * h.matrix()).exp() * eta.amps();
        CHECK(std::abs(std::abs(exact.dot(p.states.back().normalized().amps())) - 1.0) <= 1e-9);
      }
    }
    const Moments m = moments(w);
    CHECK(std::abs(m.mean - 1.0) <= 3.0 * m.se);
  }
  SUBCASE("populations are martingales with H = 0") {
    const DiffusionConfig cfg = config(HermitianOperator::zero(2), diag({-0.5, 1.0}), 1.0, 1e-3, 3);
    const DiffusionEngine engine(cfg);
    const int n = 4000;
    std::vector<double> p0(n), p1(n);
    for (int i = 0; i < n; ++i) {
      Rng rng = Rng::stream(cfg.seed, i);
      const StatePath p = engine.diffusive_sse(eta, 1.0, rng, {});
      p0[i] = std::norm(p.states.back()[0]);
      p1[i] = std::norm(p.states.back()[1]);
    }
    const Moments m0 = moments(p0), m1 = moments(p1);
    CHECK(std::abs(m0.mean - std::norm(eta[0])) <= 3.0 * m0.se);
    CHECK(std::abs(m1.mean - std::norm(eta[1])) <= 3.0 * m1.se);
  }
  SUBCASE("norm is a martingale at both step sizes") {
    const HermitianOperator r = diag({0.0, 1.0});
    for (double dt : {1e-3, 1e-4}) {
      const DiffusionConfig cfg = config(h, r, 1.0, dt, 4);
      const DiffusionEngine engine(cfg);
      const int n = 2000;
      std::vector<double> w(n);
      for (int i = 0; i < n; ++i) {
        Rng rng = Rng::stream(cfg.seed, i);
        w[i] = engine.diffusive_sse(eta, 1.0, rng, {}).norm2.back();
      }
      const Moments m = moments(w);
      CHECK(std::abs(m.mean - 1.0) <= 3.0 * m.se + 10.0 * dt);
    }
  }
  SUBCASE("blow-up is reported") {
    const DiffusionConfig cfg = config(h, diag({0.0, 1.0}), 60.0, 0.1, 5);
    Rng rng(5);
    try {
      evolve_diffusive_sse(cfg, eta, 10.0, rng);
      FAIL("expected a numeric error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::numeric);
      CHECK(std::string(e.what()).find("dt") != std::string::npos);
    }
  }
  SUBCASE("horizon must be a whole number of steps") {
    const DiffusionEngine engine(config(h, diag({0.0, 1.0}), 1.0, 1e-3, 6));
    CHECK(engine.steps_for(1.0) == 1000);
    CHECK_THROWS_AS(engine.steps_for(1.00037), Error);
  }
}

TEST_CASE("coupled wave equation") {
  Rng setup(54);
  const StateVector eta = random_state(2, setup);
  SUBCASE("gamma = 0 is unitary") {
    const HermitianOperator h(random_hermitian(2, setup));
    Rng rng(1);
    const StatePath p = evolve_coupled_sse(config(h, diag({0.0, 1.0}), 0.0, 1e-3, 1), eta, 0.4, rng);
    const Vector exact = Matrix(Complex(0.0, -0.4) * h.matrix()).exp() * eta.amps();
    CHECK((p.states.back().amps() - exact).cwiseAbs().maxCoeff() <= 1e-10);
  }
  SUBCASE("commuting H conserves R populations pathwise") {
    const DiffusionConfig cfg = config(diag({0.3, -0.8}), diag({0.0, 1.0}), 1.5, 1e-3, 2);
    for (int i = 0; i < 20; ++i) {
      Rng rng = Rng::stream(cfg.seed, i);
      const StatePath p = evolve_coupled_sse(cfg, eta, 1.0, rng, std::vector<double>{0.5});
      for (const auto& s : p.states) {
        CHECK(std::abs(std::norm(s[0]) - std::norm(eta[0])) <= 1e-10);
        CHECK(std::abs(std::norm(s[1]) - std::norm(eta[1])) <= 1e-10);
      }
    }
  }
  SUBCASE("phase variance grows at (gamma/hbar)^2 r^2 sigma^2") {
    const double gamma = 0.5, r = 1.0;
    const DiffusionConfig cfg = config(HermitianOperator::zero(2), diag({0.0, r}), gamma, 1e-3, 3);
    const int n = 4000;
    std::vector<double> ph(n), norms(n);
    for (int i = 0; i < n; ++i) {
      Rng rng = Rng::stream(cfg.seed, i);
      const StatePath p = evolve_coupled_sse(cfg, StateVector::basis(2, 1), 1.0, rng);
      ph[i] = std::arg(p.states.back()[1]);
      norms[i] = p.norm2.back();
    }
    double s = 0.0, s4 = 0.0;
    for (double x : ph) {
      s += x * x;
      s4 += x * x * x * x;
    }
    const double var = s / n;
    const double se = std::sqrt((s4 / n - var * var) / n);
    const double expected = gamma * gamma * r * r * kPi / 2.0;
    CHECK(std::abs(var - expected) <= 3.0 * se);
    const Moments mn = moments(norms);
    CHECK(std::abs(mn.mean - 1.0) <= 3.0 * mn.se + 1e-12);
  }
}

TEST_CASE("diffusive density equation") {
  Rng setup(55);
  const HermitianOperator h(random_hermitian(2, setup));
  const HermitianOperator r = diag({0.0, 1.0});
  const DensityMatrix rho0 = DensityMatrix::pure(random_state(2, setup));

  SUBCASE("gamma = 0 is unitary conjugation") {
    Rng rng(1);
    const DensityPath p = evolve_diffusive_density(config(h, r, 0.0, 1e-3, 1), rho0, 0.5, rng);
    const Matrix u = Matrix(Complex(0.0, -0.5) * h.matrix()).exp();
    CHECK(max_abs(p.rhos.back() - u * rho0.matrix() * u.adjoint()) <= 1e-10);
    CHECK(std::abs(p.traces.back() - 1.0) <= 1e-12);
  }
  SUBCASE("noise off reproduces the dephasing generator") {
    for (double dt : {1e-2, 1e-3}) {
      for (DensityScheme scheme : {DensityScheme::positive, DensityScheme::euler_maruyama}) {
        Rng rng(2);
        const DensityPath p =
            evolve_diffusive_density(config(h, r, 1.2, dt, 2), rho0, 1.0, rng, {}, DensityPathOptions{false, scheme});
        const Matrix exact = dephasing_oracle(h.matrix(), r.matrix(), 1.44 * kPi / 2.0, rho0.matrix(), 1.0);
        CHECK(max_abs(p.rhos.back() - exact) <= 10.0 * dt);
      }
    }
  }
  SUBCASE("mean trace and positivity") {
    const DiffusionConfig cfg = config(h, r, 1.0, 1e-3, 3);
    const DiffusionEngine engine(cfg);
    const int n = 2000;
    std::vector<double> tr(n);
    double worst = 0.0;
    const std::vector<double> ts{0.5};
    for (int i = 0; i < n; ++i) {
      Rng rng = Rng::stream(cfg.seed, i);
      const DensityPath p = engine.diffusive_density(rho0, 1.0, rng, ts);
      tr[i] = p.traces.back();
      for (double e : p.min_eigenvalues) worst = std::min(worst, e);
    }
    const Moments m = moments(tr);
    CHECK(std::abs(m.mean - 1.0) <= 3.0 * m.se + 10.0 * cfg.dt);
    CHECK(worst >= -1e-10);
  }
  SUBCASE("two particles keep permutation symmetry") {
    DiffusionConfig cfg = config(h, r, 1.0, 1e-3, 4);
    cfg.particles = 2;
    cfg.pair_interaction = Matrix(Matrix::Identity(4, 4) * 0.0);
    cfg.pair_interaction->diagonal() << 0.0, 0.4, 0.4, 0.0;
    const StateVector a = random_state(2, setup);
    const DensityMatrix sym = DensityMatrix::pure(StateVector(Vector(kron_naive(a.amps(), a.amps()))));
    const DiffusionEngine engine(cfg);
    const std::vector<double> ts{0.2, 0.4, 0.6, 0.8};
    for (int i = 0; i < 5; ++i) {
      Rng rng = Rng::stream(cfg.seed, i);
      const DensityPath p = engine.diffusive_density(sym, 1.0, rng, ts);
      for (const Matrix& x : p.rhos) {
        // swap of the two slots
        Matrix y = x;
        for (int s = 0; s < 4; ++s)
          for (int t = 0; t < 4; ++t) y((s % 2) * 2 + s / 2, (t % 2) * 2 + t / 2) = x(s, t);
        CHECK(max_abs(y - x) <= 1e-8);
      }
    }
  }
}

TEST_CASE("mean-field limit") {
  Rng setup(56);
  const StateVector eta = random_state(2, setup);
  SUBCASE("real pointer is free evolution") {
    const HermitianOperator h(random_hermitian(2, setup));
    const StatePath p = mean_field_evolve(config(h, diag({0.0, 1.0}), 2.0, 1e-3, 1), eta, 1.3);
    const Vector exact = Matrix(Complex(0.0, -1.3) * h.matrix()).exp() * eta.amps();
    CHECK((p.states.back().amps() - exact).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("modulated pointer adds -gamma q0 R") {
    const double a = 0.8, gamma = 1.5, t = 0.9;
    const StatePath p = mean_field_evolve(config(HermitianOperator::zero(2), diag({0.0, 1.0}), gamma, 1e-3, 1, a), eta, t);
    // q0 = -a, phases exp(i gamma q0 r t)
    CHECK(std::abs(p.states.back()[0] - eta[0]) <= 1e-12);
    CHECK(std::abs(p.states.back()[1] - std::exp(Complex(0.0, gamma * -a * t)) * eta[1]) <= 1e-9);
  }
  SUBCASE("commuting H conserves populations") {
    const StatePath p = mean_field_evolve(config(diag({0.4, 0.1}), diag({0.0, 1.0}), 1.0, 1e-3, 1, 0.5), eta, 2.0);
    CHECK(std::abs(std::norm(p.states.back()[1]) - std::norm(eta[1])) <= 1e-12);
  }
}
