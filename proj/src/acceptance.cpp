#include "qtraj/acceptance.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <ostream>
#include <sstream>

#include "qtraj/diffusion.hpp"
#include "qtraj/ensemble.hpp"
#include "qtraj/execute.hpp"
#include "qtraj/jump.hpp"
#include "qtraj/many_body.hpp"
#include "qtraj/master.hpp"
#include "qtraj/meter.hpp"
#include "qtraj/runspec.hpp"

namespace qtraj {

namespace {

std::string fmt(const char* pattern, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, pattern, a);
  return buf;
}

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

StateVector uniform_state(int d) {
  return StateVector(Vector::Constant(d, Complex(1.0 / std::sqrt(static_cast<double>(d)), 0.0)));
}

HermitianOperator two_level_r() { return HermitianOperator::diagonal(std::vector<double>{0.0, 1.0}); }

HermitianOperator sigma_x(double j) {
  Matrix h = Matrix::Zero(2, 2);
  h(0, 1) = h(1, 0) = j;
  return HermitianOperator(h);
}

HermitianOperator position(int d) {
  std::vector<double> r(d);
  for (int k = 0; k < d; ++k) r[k] = k;
  return HermitianOperator::diagonal(r);
}

HermitianOperator hopping(int d, double j) {
  Matrix h = Matrix::Zero(d, d);
  for (int s = 0; s + 1 < d; ++s) h(s, s + 1) = h(s + 1, s) = -j;
  return HermitianOperator(h);
}

Matrix coherence(int dim, int j, int k) {
  Matrix op = Matrix::Zero(dim, dim);
  op(j, j) = op(k, k) = op(j, k) = op(k, j) = 0.5;
  return op;
}

Matrix total_r(const HermitianOperator& r, int particles) {
  const int dim = int_pow(r.dim(), particles);
  Matrix op = Matrix::Zero(dim, dim);
  for (int k = 1; k <= particles; ++k) op += embed_at_slot(r.matrix(), k, particles);
  return op;
}

std::vector<double> grid_times(double t_final, int n, bool include_zero) {
  std::vector<double> t;
  for (int i = include_zero ? 0 : 1; i <= n; ++i) t.push_back(t_final * i / n);
  return t;
}

// --- criteria -------------------------------------------------------------

CriterionResult povm_completeness() {
  CriterionResult r{1, "POVM completeness", true, "", 0.0, 1.0};
  double worst = 0.0;
  const std::vector<HermitianOperator> rs{two_level_r(), position(8)};
  for (const auto& rop : rs) {
    const MeterModel meter = make_gaussian_meter(0.3, rop, 1024);
    worst = std::max(worst, meter.povm_defect());
  }
  r.pass = worst <= 1e-6;
  r.detail = fmt("max defect %.3g (tol 1e-6)", worst);
  return r;
}

CriterionResult projection_postulate() {
  CriterionResult r{2, "projection-postulate recovery", true, "", 0.0, 1.0};
  Rng rng(2002);
  double idem = 0.0, ortho = 0.0, complete = 0.0;
  for (double kappa : {0.25, 0.5, 1.0}) {
    for (int rep = 0; rep < 5; ++rep) {
      const HermitianOperator rop(random_hermitian(8, rng));
      const auto cells = sharp_projections(rop, kappa);
      Matrix sum = Matrix::Zero(8, 8);
      for (std::size_t a = 0; a < cells.size(); ++a) {
        const Matrix& p = cells[a].projector;
        idem = std::max(idem, max_abs(p * p - p));
        for (std::size_t b = a + 1; b < cells.size(); ++b) ortho = std::max(ortho, max_abs(p * cells[b].projector));
        sum += p;
      }
      complete = std::max(complete, max_abs(sum - Matrix::Identity(8, 8)));
    }
  }
  r.pass = idem <= 1e-12 && ortho <= 1e-12 && complete <= 1e-12;
  std::ostringstream os;
  os << "idempotence " << fmt("%.2g", idem) << ", orthogonality " << fmt("%.2g", ortho) << ", completeness "
     << fmt("%.2g", complete) << " (tol 1e-12)";
  r.detail = os.str();
  return r;
}

CriterionResult mean_square_normalization(int threads) {
  CriterionResult r{3, "mean-square normalization", true, "", 0.0, 30.0};
  auto meter = std::make_shared<MeterModel>(make_gaussian_meter(0.3, two_level_r(), 1024));
  const JumpEngine engine(JumpConfig{sigma_x(1.0), meter, 5.0, 1.0, 3003, JumpMode::linear});
  const std::vector<double> times{1.0};
  const EnsembleRun run = run_jump_ensemble(engine, uniform_state(2), 1.0, 20000, {}, times, threads);
  const double mean = run.stats.norm2.mean[0];
  const double se = run.stats.norm2.se[0];
  r.pass = std::abs(mean - 1.0) <= 3.0 * se;
  std::ostringstream os;
  os << "E||chi(1)||^2 = " << fmt("%.5f", mean) << " +- " << fmt("%.5f", se) << ", |dev|/SE = "
     << fmt("%.2f", std::abs(mean - 1.0) / se);
  r.detail = os.str();
  return r;
}

CriterionResult jump_vs_master(int threads) {
  CriterionResult r{4, "jump unravelling = master equation", true, "", 0.0, 300.0};
  const int d = 4;
  const auto rop = position(d);
  auto meter = std::make_shared<MeterModel>(make_gaussian_meter(0.3, rop, 1024));
  const std::vector<HermitianOperator> hs{
      HermitianOperator::diagonal(std::vector<double>{0.3, -0.2, 0.5, 0.1}),  // commutes with R
      hopping(d, 1.0)};
  const std::vector<Observable> obs{{"R", rop.matrix()}, {"coherence:0:1", coherence(d, 0, 1)}};
  const auto times = grid_times(1.0, 10, false);
  const StateVector eta = uniform_state(d);
  double worst = 0.0;
  std::ostringstream os;
  for (std::size_t s = 0; s < hs.size(); ++s) {
    const JumpEngine engine(JumpConfig{hs[s], meter, 5.0, 1.0, 4004 + s, JumpMode::normalized});
    const EnsembleRun run = run_jump_ensemble(engine, eta, 1.0, 20000, obs, times, threads);
    MasterConfig mc;
    mc.h = hs[s];
    mc.meter = meter;
    mc.nu = 5.0;
    const Generator gen = make_generator(mc);
    const MasterPath path = rk4_solve(gen, eta.amps() * eta.amps().adjoint(), 1.0, stable_step(gen, 1.0, 1e-3), times);
    const OracleComparison cmp = compare_to_master(run.stats, path, obs);
    r.pass = r.pass && cmp.pass;
    worst = std::max(worst, cmp.worst_ratio);
    os << (s == 0 ? "[R,H]=0" : "; [R,H]!=0") << " max |dev|/SE " << fmt("%.2f", cmp.worst_ratio);
  }
  r.detail = os.str() + " (tol 3)";
  return r;
}

CriterionResult mixing_oracle() {
  CriterionResult r{5, "mixing oracle", true, "", 0.0, 10.0};
  Rng rng(5005);
  double worst = 0.0;
  for (int m : {2, 3}) {
    ManyBodyConfig cfg;
    cfg.particles = m;
    cfg.h_single = sigma_x(1.0);
    cfg.meter = std::make_shared<MeterModel>(make_gaussian_meter(0.5, two_level_r(), 1024));
    const ManyBodySystem sys(cfg);
    for (int rep = 0; rep < 3; ++rep) {
      const DensityMatrix rho = DensityMatrix::pure(random_state(sys.dim(), rng));
      std::vector<double> lambdas;
      std::vector<int> indices;
      while (lambdas.size() < 4) {
        const int i = static_cast<int>(rng.uniform() * sys.meter().grid_size());
        const double lam = sys.meter().lambda(i);
        if (!sys.meter().on_support(i) || std::abs(lam) > 1.5) continue;
        lambdas.push_back(lam);
        indices.push_back(i);
      }
      const Matrix oracle = mixing_brute_force_oracle(sys, rho, lambdas).matrix();
      DensityMatrix iterated = rho;
      Matrix fast = rho.matrix();
      for (std::size_t j = 0; j < lambdas.size(); ++j) {
        iterated = mixing_reduction(sys, iterated, lambdas[j]);
        fast = sys.mixing_step(fast, indices[j]);
      }
      const double scale = std::max(max_abs(oracle), 1e-300);
      worst = std::max({worst, max_abs(iterated.matrix() - oracle) / scale, max_abs(fast - oracle) / scale});
    }
  }
  r.pass = worst <= 1e-10;
  r.detail = fmt("max deviation %.3g relative (tol 1e-10)", worst);
  return r;
}

CriterionResult many_body_density(int threads) {
  CriterionResult r{6, "many-body density properties", true, "", 0.0, 120.0};
  ManyBodyConfig cfg;
  cfg.particles = 2;
  cfg.h_single = sigma_x(1.0);
  cfg.pair_interaction = nearest_neighbor_coupling(2, 0.5);
  cfg.meter = std::make_shared<MeterModel>(make_gaussian_meter(0.5, two_level_r(), 1024));
  cfg.nu = 3.0;
  cfg.seed = 6006;
  cfg.sector = Sector::symmetric;
  const ManyBodySystem sys(cfg);
  Rng rng(6007);
  const StateVector start = symmetrize(random_state(4, rng), 2, 2).normalized();
  const DensityMatrix rho0 = DensityMatrix::pure(start);
  const auto times = grid_times(1.0, 20, true);
  const std::vector<Observable> obs{{"R", total_r(two_level_r(), 2)}};

  const EnsembleRun lin = run_density_ensemble(sys, rho0, 1.0, JumpMode::linear, 5000, obs, times, threads);
  const EnsembleRun nrm = run_density_ensemble(sys, rho0, 1.0, JumpMode::normalized, 5000, obs, times, threads);

  const double min_eig = std::min(lin.stats.min_eigenvalue, nrm.stats.min_eigenvalue);
  const double tr_mean = lin.stats.norm2.mean.back(), tr_se = lin.stats.norm2.se.back();
  const double perm = std::max(lin.stats.max_permutation_defect, nrm.stats.max_permutation_defect);
  const double expected_events = 2 * 3.0 * 1.0;
  const bool events_ok = std::abs(lin.stats.events_mean - expected_events) <= 3.0 * lin.stats.events_se &&
                         std::abs(nrm.stats.events_mean - expected_events) <= 3.0 * nrm.stats.events_se;
  // Entropy is >= 0 after every first event. Strict growth is only claimed for generic outcomes:
  // at lambda where G(lambda) is nearly scalar the two labelled branches coincide.
  double entropy = -1.0, entropy_floor = 0.0;
  int non_generic = 0;
  for (const auto& s : nrm.samples) {
    if (s.events.empty()) continue;
    entropy_floor = std::min(entropy_floor, s.first_event_entropy);
    const Vector g = sys.meter().reduction_factors(s.events.front().second);
    const double spread = g.cwiseAbs().maxCoeff() / g.cwiseAbs().minCoeff() - 1.0;
    if (spread < 1e-2) {
      ++non_generic;
      continue;
    }
    entropy = entropy < 0.0 ? s.first_event_entropy : std::min(entropy, s.first_event_entropy);
  }

  const bool eig_ok = min_eig >= -1e-10;
  const bool trace_ok = std::abs(tr_mean - 1.0) <= 3.0 * tr_se;
  const bool perm_ok = perm <= 1e-9;
  const bool entropy_ok = entropy > 1e-6 && entropy_floor >= -1e-12;
  r.pass = eig_ok && trace_ok && perm_ok && events_ok && entropy_ok;
  std::ostringstream os;
  os << "min eig " << fmt("%.2g", min_eig) << ", E Tr rho(1) = " << fmt("%.4f", tr_mean) << " +- "
     << fmt("%.4f", tr_se) << ", perm defect " << fmt("%.2g", perm) << ", events " << fmt("%.3f", lin.stats.events_mean)
     << "/" << fmt("%.3f", nrm.stats.events_mean) << " vs 6, min first-event entropy " << fmt("%.3g", entropy)
     << " (generic lambda; " << non_generic << " events with spread(G) < 1e-2 checked >= 0 only)";
  r.detail = os.str();
  return r;
}

DiffusionConfig two_level_diffusion(double dt, std::uint64_t seed, int particles) {
  DiffusionConfig cfg;
  cfg.h = sigma_x(1.0);
  cfg.r = two_level_r();
  cfg.gamma = 1.0;
  cfg.pointer = std::make_shared<PointerState>(gaussian_pointer(1024, 6.0));
  cfg.dt = dt;
  cfg.seed = seed;
  cfg.particles = particles;
  if (particles > 1) cfg.pair_interaction = nearest_neighbor_coupling(2, 0.5);
  return cfg;
}

CriterionResult diffusive_martingale(int threads) {
  CriterionResult r{7, "diffusive martingale", true, "", 0.0, 180.0};
  const std::vector<double> dts{1e-3, 1e-4};
  std::vector<double> dev, se;
  const std::vector<double> times{1.0};
  for (std::size_t k = 0; k < dts.size(); ++k) {
    const DiffusionEngine engine(two_level_diffusion(dts[k], 7007 + k, 1));
    const EnsembleRun run = run_diffusive_sse_ensemble(engine, uniform_state(2), 1.0, 10000, {}, times, threads);
    dev.push_back(run.stats.norm2.mean[0] - 1.0);
    se.push_back(run.stats.norm2.se[0]);
  }
  // weighted least-squares slope of the bias against dt
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < dts.size(); ++k) {
    num += dev[k] * dts[k] / (se[k] * se[k]);
    den += dts[k] * dts[k] / (se[k] * se[k]);
  }
  const double c = num / den;
  bool ok = std::isfinite(c);
  for (std::size_t k = 0; k < dts.size(); ++k) ok = ok && std::abs(dev[k]) <= 3.0 * se[k] + std::abs(c) * dts[k];
  ok = ok && std::abs(dev[1]) <= 3.0 * se[1];
  r.pass = ok;
  std::ostringstream os;
  os << "dt=1e-3: dev " << fmt("%.2e", dev[0]) << " (SE " << fmt("%.1e", se[0]) << "), dt=1e-4: dev "
     << fmt("%.2e", dev[1]) << " (SE " << fmt("%.1e", se[1]) << "), C = " << fmt("%.3g", c);
  r.detail = os.str();
  return r;
}

CriterionResult diffusive_vs_lindblad(int threads) {
  CriterionResult r{8, "diffusive unravelling = Lindblad oracle", true, "", 0.0, 300.0};
  const auto times = grid_times(1.0, 10, false);
  std::ostringstream os;
  for (int m : {1, 2}) {
    const DiffusionConfig cfg = two_level_diffusion(1e-4, 8008 + m, m);
    const DiffusionEngine engine(cfg);
    const int dim = engine.dim();
    const std::vector<Observable> obs{{"R", total_r(cfg.r, m)}, {"coherence:0:1", coherence(dim, 0, 1)}};
    const StateVector eta = uniform_state(dim);
    MasterConfig mc;
    mc.h = engine.hamiltonian();
    mc.r = cfg.r;
    mc.pointer = cfg.pointer;
    mc.particles = m;
    mc.gamma = cfg.gamma;
    mc.mode = MasterMode::diffusive;
    const Generator gen = make_generator(mc);
    const MasterPath path = rk4_solve(gen, eta.amps() * eta.amps().adjoint(), 1.0, stable_step(gen, 1.0, 1e-3), times);
    const EnsembleRun run =
        run_diffusive_density_ensemble(engine, DensityMatrix::pure(eta), 1.0, 10000, obs, times, threads);
    const OracleComparison cmp = compare_to_master(run.stats, path, obs);
    r.pass = r.pass && cmp.pass;
    os << (m == 1 ? "" : "; ") << "M=" << m << " density max |dev|/SE " << fmt("%.2f", cmp.worst_ratio);
    if (m == 1) {
      const EnsembleRun sse = run_diffusive_sse_ensemble(engine, eta, 1.0, 10000, obs, times, threads);
      const OracleComparison c2 = compare_to_master(sse.stats, path, obs);
      r.pass = r.pass && c2.pass;
      os << "; M=1 wave max |dev|/SE " << fmt("%.2f", c2.worst_ratio);
    }
  }
  r.detail = os.str() + " (tol 3)";
  return r;
}

CriterionResult bridge() {
  CriterionResult r{9, "jump-to-diffusion bridge", true, "", 0.0, 60.0};
  DiffusionConfig base = two_level_diffusion(1e-3, 0, 1);
  base.pointer = std::make_shared<PointerState>(gaussian_pointer(1024, 6.0 + 0.1));
  const std::vector<double> nus{1e2, 1e3, 1e4};
  const BridgeReport rep = jump_to_diffusion_bridge(base, nus);
  r.pass = rep.pass;
  std::ostringstream os;
  for (const auto& row : rep.rows) os << "e(" << fmt("%.0e", row.nu) << ")=" << fmt("%.3g", row.generator_error) << " ";
  os << (rep.monotone ? "decreasing" : "NOT decreasing") << " (tol 5e-2)";
  r.detail = os.str();
  return r;
}

CriterionResult mean_field() {
  CriterionResult r{10, "mean-field limit", true, "", 0.0, 60.0};
  DiffusionConfig base = two_level_diffusion(1e-3, 0, 1);
  base.pointer = std::make_shared<PointerState>(gaussian_pointer(1024, 6.1, 1.0));
  const StateVector eta = uniform_state(2);
  const std::vector<double> nus{1e2, 1e3, 1e4};
  const MeanFieldReport rep = mean_field_check(base, eta, nus);

  DiffusionConfig real = base;
  real.pointer = std::make_shared<PointerState>(gaussian_pointer(1024, 6.1));
  const StatePath mf = mean_field_evolve(real, eta, 1.0);
  const Vector free = Propagator(real.h, real.hbar).apply(eta.amps(), 1.0);
  const double free_dev = (mf.states.back().amps() - free).cwiseAbs().maxCoeff();

  r.pass = rep.pass && std::abs(rep.q0) > 1e-3 && free_dev <= 1e-9;
  std::ostringstream os;
  os << "q0 = " << fmt("%.4f", rep.q0) << ", ";
  for (const auto& row : rep.rows) os << "e(" << fmt("%.0e", row.nu) << ")=" << fmt("%.3g", row.generator_error) << " ";
  os << "(tol 5e-2); real f0 vs free evolution " << fmt("%.2g", free_dev) << " (tol 1e-9)";
  r.detail = os.str();
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

CriterionResult determinism(const AcceptanceOptions& options) {
  CriterionResult r{11, "determinism across thread counts", true, "", 0.0, 0.0};
  std::vector<RunSpec> specs;
  {
    RunSpec s;
    s.experiment = "jump";
    s.preset = "lattice-particle";
    s.d = 4;
    s.n_traj = 400;
    s.observables = {{"R", std::nullopt}, {"coherence:0:1", std::nullopt}};
    s.seed = 11011;
    specs.push_back(s);
  }
  {
    RunSpec s;
    s.experiment = "many-body";
    s.preset = "two-atoms";
    s.particles = 2;
    s.nu = 3.0;
    s.n_traj = 300;
    s.seed = 11012;
    specs.push_back(s);
  }
  {
    RunSpec s;
    s.experiment = "diffusion";
    s.preset = "two-atoms";
    s.particles = 2;
    s.dt = 1e-3;
    s.n_traj = 100;
    s.seed = 11013;
    specs.push_back(s);
  }
  int files = 0;
  std::ostringstream log;
  std::string mismatch;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    std::vector<std::filesystem::path> dirs;
    for (int threads : {1, std::max(2, options.threads)}) {
      RunSpec s = specs[k];
      s.threads = threads;
      s.out = (options.scratch / ("spec" + std::to_string(k) + "-threads" + std::to_string(threads))).string();
      std::filesystem::remove_all(s.out);
      const int code = execute(s, log);
      if (code != 0 && code != 1) {
        r.pass = false;
        mismatch = "execute failed: " + log.str();
      }
      dirs.emplace_back(s.out);
    }
    for (const auto& entry : std::filesystem::directory_iterator(dirs[0])) {
      const auto other = dirs[1] / entry.path().filename();
      ++files;
      if (!std::filesystem::exists(other) || slurp(entry.path()) != slurp(other)) {
        r.pass = false;
        mismatch = entry.path().filename().string();
      }
    }
  }
  r.detail = std::to_string(files) + " data files compared across 1 and " + std::to_string(std::max(2, options.threads)) +
             " threads" + (mismatch.empty() ? ", byte-identical" : ", mismatch: " + mismatch);
  return r;
}

}  // namespace

CriterionResult run_criterion(int id, const AcceptanceOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  CriterionResult r;
  try {
    switch (id) {
      case 1: r = povm_completeness(); break;
      case 2: r = projection_postulate(); break;
      case 3: r = mean_square_normalization(options.threads); break;
      case 4: r = jump_vs_master(options.threads); break;
      case 5: r = mixing_oracle(); break;
      case 6: r = many_body_density(options.threads); break;
      case 7: r = diffusive_martingale(options.threads); break;
      case 8: r = diffusive_vs_lindblad(options.threads); break;
      case 9: r = bridge(); break;
      case 10: r = mean_field(); break;
      case 11: r = determinism(options); break;
      default: fail(ErrorKind::validation, "criterion id must be in 1..11");
    }
  } catch (const Error& e) {
    r.id = id;
    r.pass = false;
    r.detail = std::string("error: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (r.budget_seconds > 0.0 && r.seconds >= r.budget_seconds) {
    r.pass = false;
    r.detail += fmt("; runtime over budget of %.0f s", r.budget_seconds);
  }
  return r;
}

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options, std::ostream& out) {
  std::vector<CriterionResult> results;
  for (int id = 1; id <= kCriterionCount; ++id) {
    results.push_back(run_criterion(id, options));
    out << format_result(results.back()) << std::endl;
  }
  return results;
}

std::string format_result(const CriterionResult& r) {
  char head[96];
  std::snprintf(head, sizeof head, "criterion %2d %-40s %s", r.id, r.name.c_str(), r.pass ? "PASS" : "FAIL");
  char tail[48];
  std::snprintf(tail, sizeof tail, " [%.2f s]", r.seconds);
  return std::string(head) + "  " + r.detail + tail;
}

}  // namespace qtraj
