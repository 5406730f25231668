#include "qtraj/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace qtraj {

namespace {

struct Kahan {
  double sum = 0.0, comp = 0.0;
  void add(double x) {
    const double y = x - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
};

double expect(const Matrix& op, const Vector& chi) { return chi.dot(op * chi).real(); }
double expect(const Matrix& op, const Matrix& rho) { return (op * rho).trace().real(); }

void check_inputs(int n_traj, const std::vector<Observable>& observables, int dim) {
  require(n_traj >= 2, "an ensemble needs n_traj >= 2");
  for (const auto& o : observables) {
    require(o.op.rows() == dim && o.op.cols() == dim, "observable '" + o.name + "' has the wrong dimension");
    require(hermiticity_defect(o.op) <= 1e-10, "observable '" + o.name + "' must be Hermitian");
  }
}

}  // namespace

std::pair<double, double> mean_and_se(const std::vector<double>& values) {
  const std::size_t n = values.size();
  if (n == 0) return {0.0, 0.0};
  Kahan s;
  for (double v : values) s.add(v);
  const double mean = s.sum / static_cast<double>(n);
  if (n < 2) return {mean, 0.0};
  Kahan q;
  for (double v : values) q.add((v - mean) * (v - mean));
  const double var = q.sum / static_cast<double>(n - 1);
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

void parallel_for(int n, int threads, const std::function<void(int)>& f) {
  require(threads >= 1, "threads must be >= 1");
  if (n <= 0) return;
  std::atomic<int> next{0};
  std::mutex mu;
  int failed_index = std::numeric_limits<int>::max();
  std::exception_ptr failure;

  auto worker = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (i > failed_index) return;
      }
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (i < failed_index) {
          failed_index = i;
          failure = std::current_exception();
        }
      }
    }
  };
  const int workers = std::min(threads, n);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) {
    try {
      std::rethrow_exception(failure);
    } catch (const Error& e) {
      fail(e.kind(), "trajectory " + std::to_string(failed_index) + ": " + e.what());
    } catch (const std::exception& e) {
      fail(ErrorKind::numeric, "trajectory " + std::to_string(failed_index) + ": " + e.what());
    }
  }
}

EnsembleStats aggregate(const std::vector<TrajectorySample>& samples, const std::vector<double>& times,
                        const std::vector<Observable>& observables) {
  EnsembleStats st;
  st.n_traj = static_cast<int>(samples.size());
  st.times = times;
  const std::size_t nt = times.size();
  std::vector<double> column(samples.size());
  auto series = [&](auto&& get) {
    SeriesStats out;
    for (std::size_t t = 0; t < nt; ++t) {
      for (std::size_t j = 0; j < samples.size(); ++j) column[j] = get(samples[j], t);
      const auto [m, se] = mean_and_se(column);
      out.mean.push_back(m);
      out.se.push_back(se);
    }
    return out;
  };
  for (std::size_t o = 0; o < observables.size(); ++o) {
    st.names.push_back(observables[o].name);
    st.observables.push_back(series([o](const TrajectorySample& s, std::size_t t) { return s.observables[o][t]; }));
  }
  st.norm2 = series([](const TrajectorySample& s, std::size_t t) { return s.norm2[t]; });
  const bool density = !samples.empty() && !samples.front().entropy.empty();
  if (density) st.entropy = series([](const TrajectorySample& s, std::size_t t) { return s.entropy[t]; });

  std::vector<double> counts;
  for (const auto& s : samples) counts.push_back(static_cast<double>(s.events.size()));
  std::tie(st.events_mean, st.events_se) = mean_and_se(counts);

  if (density) {
    st.min_eigenvalue = std::numeric_limits<double>::infinity();
    for (const auto& s : samples) {
      for (double v : s.min_eigenvalue) st.min_eigenvalue = std::min(st.min_eigenvalue, v);
      st.max_permutation_defect = std::max(st.max_permutation_defect, s.max_permutation_defect);
      if (s.first_event_entropy >= 0.0) {
        st.min_first_event_entropy = st.min_first_event_entropy < 0.0
                                         ? s.first_event_entropy
                                         : std::min(st.min_first_event_entropy, s.first_event_entropy);
      }
    }
  }
  return st;
}

EnsembleRun run_jump_ensemble(const JumpEngine& engine, const StateVector& eta, double t_final, int n_traj,
                              const std::vector<Observable>& observables, const std::vector<double>& sample_times,
                              int threads) {
  check_inputs(n_traj, observables, engine.dim());
  EnsembleRun run;
  run.samples.resize(n_traj);
  parallel_for(n_traj, threads, [&](int i) {
    const Trajectory tr = engine.trajectory(eta, t_final, static_cast<std::uint64_t>(i), sample_times);
    TrajectorySample& s = run.samples[i];
    s.index = static_cast<std::uint64_t>(i);
    for (const auto& e : tr.events) s.events.emplace_back(e.t, e.lambda);
    s.observables.assign(observables.size(), {});
    for (const auto& chi : tr.samples) {
      for (std::size_t o = 0; o < observables.size(); ++o) s.observables[o].push_back(expect(observables[o].op, chi.amps()));
      s.norm2.push_back(chi.norm2());
    }
    s.final_norm2 = tr.state.norm2();
  });
  run.stats = aggregate(run.samples, sample_times, observables);
  return run;
}

EnsembleRun run_density_ensemble(const ManyBodySystem& system, const DensityMatrix& rho0, double t_final,
                                 JumpMode mode, int n_traj, const std::vector<Observable>& observables,
                                 const std::vector<double>& sample_times, int threads) {
  check_inputs(n_traj, observables, system.dim());
  EnsembleRun run;
  run.samples.resize(n_traj);
  parallel_for(n_traj, threads, [&](int i) {
    const DensityTrajectory tr = system.trajectory(rho0, t_final, mode, static_cast<std::uint64_t>(i), sample_times);
    TrajectorySample& s = run.samples[i];
    s.index = static_cast<std::uint64_t>(i);
    for (const auto& e : tr.events) s.events.emplace_back(e.t, e.lambda);
    s.observables.assign(observables.size(), {});
    for (const auto& rho : tr.samples)
      for (std::size_t o = 0; o < observables.size(); ++o) s.observables[o].push_back(expect(observables[o].op, rho));
    s.norm2 = tr.traces;
    s.entropy = tr.entropy_series;
    s.min_eigenvalue = tr.min_eigenvalues;
    for (double v : tr.permutation_defects) s.max_permutation_defect = std::max(s.max_permutation_defect, v);
    if (tr.first_event_entropy) s.first_event_entropy = *tr.first_event_entropy;
    s.final_norm2 = tr.rho.trace();
  });
  run.stats = aggregate(run.samples, sample_times, observables);
  return run;
}

EnsembleRun run_diffusive_sse_ensemble(const DiffusionEngine& engine, const StateVector& eta, double t_final,
                                       int n_traj, const std::vector<Observable>& observables,
                                       const std::vector<double>& sample_times, int threads, WaveEquation equation) {
  check_inputs(n_traj, observables, engine.single_dim());
  EnsembleRun run;
  run.samples.resize(n_traj);
  const std::uint64_t seed = engine.config().seed;
  parallel_for(n_traj, threads, [&](int i) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i));
    const StatePath path = equation == WaveEquation::diffusive
                               ? engine.diffusive_sse(eta, t_final, rng, sample_times)
                               : engine.coupled_sse(eta, t_final, rng, sample_times);
    TrajectorySample& s = run.samples[i];
    s.index = static_cast<std::uint64_t>(i);
    s.observables.assign(observables.size(), {});
    // the path ends with the state at T after the requested samples
    for (std::size_t k = 0; k < sample_times.size(); ++k) {
      for (std::size_t o = 0; o < observables.size(); ++o)
        s.observables[o].push_back(expect(observables[o].op, path.states[k].amps()));
      s.norm2.push_back(path.norm2[k]);
    }
    s.final_norm2 = path.norm2.back();
  });
  run.stats = aggregate(run.samples, sample_times, observables);
  return run;
}

EnsembleRun run_diffusive_density_ensemble(const DiffusionEngine& engine, const DensityMatrix& rho0, double t_final,
                                           int n_traj, const std::vector<Observable>& observables,
                                           const std::vector<double>& sample_times, int threads,
                                           DensityPathOptions options) {
  check_inputs(n_traj, observables, engine.dim());
  EnsembleRun run;
  run.samples.resize(n_traj);
  const std::uint64_t seed = engine.config().seed;
  const int m = engine.config().particles;
  const int d = engine.single_dim();
  parallel_for(n_traj, threads, [&](int i) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i));
    const DensityPath path = engine.diffusive_density(rho0, t_final, rng, sample_times, options);
    TrajectorySample& s = run.samples[i];
    s.index = static_cast<std::uint64_t>(i);
    s.observables.assign(observables.size(), {});
    for (std::size_t k = 0; k < sample_times.size(); ++k) {
      const Matrix& rho = path.rhos[k];
      for (std::size_t o = 0; o < observables.size(); ++o) s.observables[o].push_back(expect(observables[o].op, rho));
      s.norm2.push_back(path.traces[k]);
      s.entropy.push_back(von_neumann_entropy(rho));
      s.min_eigenvalue.push_back(path.min_eigenvalues[k]);
      if (m > 1) s.max_permutation_defect = std::max(s.max_permutation_defect, permutation_symmetry_check(rho, m, d));
    }
    s.final_norm2 = path.traces.back();
  });
  run.stats = aggregate(run.samples, sample_times, observables);
  return run;
}

OracleComparison compare_to_master(const EnsembleStats& stats, const MasterPath& master,
                                   const std::vector<Observable>& observables, double n_sigma) {
  require(observables.size() == stats.observables.size(), "observable list does not match the ensemble");
  OracleComparison out;
  out.pass = true;
  for (std::size_t t = 0; t < stats.times.size(); ++t) {
    const double ts = stats.times[t];
    std::size_t k = 0;
    while (k < master.times.size() && std::abs(master.times[k] - ts) > 1e-9 * std::max(1.0, std::abs(ts))) ++k;
    require(k < master.times.size(), "master path has no sample at an ensemble time");
    for (std::size_t o = 0; o < observables.size(); ++o) {
      ComparisonPoint p;
      p.observable = observables[o].name;
      p.t = ts;
      p.mc_mean = stats.observables[o].mean[t];
      p.mc_se = stats.observables[o].se[t];
      p.reference = (observables[o].op * master.rhos[k]).trace().real();
      const double diff = std::abs(p.mc_mean - p.reference);
      p.pass = diff <= n_sigma * p.mc_se + 1e-12;
      if (p.mc_se > 0.0) out.worst_ratio = std::max(out.worst_ratio, diff / p.mc_se);
      out.pass = out.pass && p.pass;
      out.points.push_back(p);
    }
  }
  return out;
}

}  // namespace qtraj
