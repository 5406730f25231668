#include "qtraj/execute.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "qtraj/diffusion.hpp"
#include "qtraj/jump.hpp"
#include "qtraj/many_body.hpp"
#include "qtraj/master.hpp"
#include "qtraj/records.hpp"

namespace qtraj {

using nlohmann::ordered_json;

namespace {

Matrix hopping_chain(int d, double j) {
  Matrix h = Matrix::Zero(d, d);
  for (int s = 0; s + 1 < d; ++s) {
    h(s, s + 1) = -j;
    h(s + 1, s) = -j;
  }
  return h;
}

double radius(const HermitianOperator& r) { return r.matrix().cwiseAbs().rowwise().sum().maxCoeff(); }

// largest kappa any meter of this run will use, for the grid coverage rule
double kappa_for_grid(const RunSpec& s) {
  if (s.experiment == "bridge") return std::abs(s.gamma) / std::sqrt(s.bridge_nus.front());
  if (s.experiment == "diffusion" || (s.experiment == "master" && s.master_mode == "diffusive")) return 0.0;
  return s.kappa;
}

struct Summary {
  ordered_json checks = ordered_json::array();
  bool pass = true;
  void add(const std::string& name, bool ok, ordered_json detail) {
    detail["name"] = name;
    detail["pass"] = ok;
    checks.push_back(detail);
    pass = pass && ok;
  }
};

std::vector<std::vector<double>> master_rows(const MasterPath& path, const std::vector<Observable>& obs,
                                             std::size_t n_times) {
  std::vector<std::vector<double>> rows;
  for (std::size_t t = 0; t < n_times; ++t) {
    std::vector<double> row{path.times[t]};
    for (const auto& o : obs) row.push_back((o.op * path.rhos[t]).trace().real());
    row.push_back(path.rhos[t].trace().real());
    rows.push_back(row);
  }
  return rows;
}

std::vector<std::string> master_columns(const std::vector<Observable>& obs) {
  std::vector<std::string> cols{"t"};
  for (const auto& o : obs) cols.push_back(o.name);
  cols.push_back("trace");
  return cols;
}

ordered_json comparison_json(const OracleComparison& c) {
  return {{"worst_se_ratio", c.worst_ratio}, {"points", c.points.size()}};
}

void write_json(const std::filesystem::path& path, const ordered_json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::validation, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace

Model build_model(const RunSpec& s) {
  Model m;
  m.particles = s.particles;
  if (s.preset == "custom") {
    m.h_single = HermitianOperator(*s.h);
    m.r = HermitianOperator(*s.r);
  } else if (s.preset == "lattice-particle") {
    m.h_single = HermitianOperator(hopping_chain(s.d, s.hopping));
    std::vector<double> pos(s.d);
    for (int k = 0; k < s.d; ++k) pos[k] = k;
    m.r = HermitianOperator::diagonal(pos);
  } else {
    Matrix h = Matrix::Zero(2, 2);
    h(0, 1) = s.hopping;
    h(1, 0) = s.hopping;
    m.h_single = HermitianOperator(h);
    m.r = HermitianOperator::diagonal(std::vector<double>{0.0, 1.0});
  }
  const int d = m.r.dim();
  if (s.particles > 1 && s.pair_coupling != 0.0) m.pair = nearest_neighbor_coupling(d, s.pair_coupling);
  m.h_full = HermitianOperator::hermitized(tensor_hamiltonian(m.h_single.matrix(), m.pair ? &*m.pair : nullptr,
                                                              s.particles));
  if (!s.pointer_table.empty()) {
    m.pointer = std::make_shared<PointerState>(load_pointer_table(s.pointer_table));
  } else {
    const double half_width = MeterOptions{}.coverage_base + kappa_for_grid(s) * radius(m.r);
    m.pointer = std::make_shared<PointerState>(gaussian_pointer(s.grid_points, half_width, s.modulation));
  }
  return m;
}

std::vector<Observable> resolve_observables(const RunSpec& s, const Model& m) {
  const int dim = m.h_full.dim();
  std::vector<Observable> out;
  for (const auto& o : s.observables) {
    if (o.matrix) {
      out.push_back({o.name, *o.matrix});
      continue;
    }
    int j = -1, k = -1;
    Matrix op = Matrix::Zero(dim, dim);
    if (o.name == "R") {
      for (int slot = 1; slot <= m.particles; ++slot) op += embed_at_slot(m.r.matrix(), slot, m.particles);
    } else if (o.name == "H") {
      op = m.h_full.matrix();
    } else if (std::sscanf(o.name.c_str(), "coherence:%d:%d", &j, &k) == 2) {
      op(j, j) = op(k, k) = op(j, k) = op(k, j) = 0.5;
    } else if (std::sscanf(o.name.c_str(), "projector:%d", &j) == 1) {
      op(j, j) = 1.0;
    } else {
      fail(ErrorKind::validation, "unknown observable " + o.name);
    }
    out.push_back({o.name, op});
  }
  return out;
}

StateVector initial_state(const RunSpec& s) {
  const int dim = int_pow(s.d, s.particles);
  if (s.initial_amplitudes) return StateVector(*s.initial_amplitudes).normalized();
  int k = -1;
  if (std::sscanf(s.initial_state.c_str(), "basis:%d", &k) == 1) return StateVector::basis(dim, k);
  return StateVector(Vector::Constant(dim, Complex(1.0 / std::sqrt(static_cast<double>(dim)), 0.0)));
}

std::vector<double> sample_times(const RunSpec& s) {
  std::vector<double> t;
  for (int i = 0; i <= s.n_samples; ++i) t.push_back(s.t_final * i / s.n_samples);
  return t;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation:
    case ErrorKind::parse:
    case ErrorKind::out_of_range:
      return 2;
    case ErrorKind::numeric:
    case ErrorKind::degenerate:
      return 3;
    case ErrorKind::capacity:
      return 4;
  }
  return 1;
}

int execute(const RunSpec& spec, std::ostream& log) {
  try {
    validate_runspec(spec);
    const std::filesystem::path dir(spec.out);
    std::filesystem::create_directories(dir);
    const std::string hash = spec_hash(spec);
    const std::uint64_t seed = spec.seed;

    ordered_json manifest;
    manifest["spec_hash"] = hash;
    manifest["seed"] = seed;
    ordered_json resolved = to_json(spec);
    resolved.erase("threads");
    resolved.erase("out");
    manifest["spec"] = resolved;
    write_json(dir / "manifest.json", manifest);

    const Model model = build_model(spec);
    const auto observables = resolve_observables(spec, model);
    const auto times = sample_times(spec);
    std::vector<std::string> names;
    for (const auto& o : observables) names.push_back(o.name);
    Summary summary;

    auto meter_for = [&](double kappa) { return std::make_shared<MeterModel>(kappa, model.r, *model.pointer); };

    if (spec.experiment == "single-kick") {
      const auto meter = meter_for(spec.kappa);
      const StateVector eta = initial_state(spec);
      const auto p = meter->output_density(eta);
      std::vector<std::vector<double>> rows;
      for (int i = 0; i < meter->grid_size(); ++i) rows.push_back({meter->lambda(i), p[i]});
      write_table(dir / "output_density.tsv", hash, seed, {"lambda", "p"}, rows);
      rows.clear();
      for (double lambda : spec.kick_lambdas) {
        const StateVector post = single_kick_evolve(*meter, model.h_single, eta, spec.kick_t0, spec.kick_t, lambda,
                                                    spec.hbar);
        const StateVector normed = post.normalized();
        for (int k = 0; k < normed.dim(); ++k)
          rows.push_back({lambda, static_cast<double>(k), normed.amps()(k).real(), normed.amps()(k).imag()});
      }
      write_table(dir / "posterior.tsv", hash, seed, {"lambda", "component", "re", "im"}, rows);
      const double defect = meter->povm_defect();
      summary.add("povm_completeness", defect <= 1e-6, {{"defect", defect}, {"tolerance", 1e-6}});
    } else if (spec.experiment == "jump" || spec.experiment == "many-body") {
      const auto meter = meter_for(spec.kappa);
      const JumpMode mode = spec.mode == "linear" ? JumpMode::linear : JumpMode::normalized;
      EnsembleRun run;
      Matrix rho_start;
      if (spec.experiment == "jump") {
        JumpConfig cfg{model.h_single, meter, spec.nu, spec.hbar, seed, mode};
        const JumpEngine engine(cfg);
        const StateVector eta = initial_state(spec);
        run = run_jump_ensemble(engine, eta, spec.t_final, spec.n_traj, observables, times, spec.threads);
        rho_start = eta.amps() * eta.amps().adjoint();
      } else {
        ManyBodyConfig cfg;
        cfg.particles = spec.particles;
        cfg.h_single = model.h_single;
        cfg.pair_interaction = model.pair;
        cfg.meter = meter;
        cfg.nu = spec.nu;
        cfg.hbar = spec.hbar;
        cfg.seed = seed;
        cfg.sector = spec.sector == "symmetric" ? Sector::symmetric : Sector::full_tensor;
        const ManyBodySystem system(cfg);
        const StateVector eta = initial_state(spec);
        const DensityMatrix rho0 = system.prepare(DensityMatrix::pure(eta));
        run = run_density_ensemble(system, rho0, spec.t_final, mode, spec.n_traj, observables, times, spec.threads);
        rho_start = rho0.matrix();
      }
      write_ensemble_table(dir / "ensemble.tsv", hash, seed, run.stats);
      if (spec.records) write_trajectory_records(dir / "trajectories.jsonl", hash, seed, times, names, run.samples);
      if (spec.compare) {
        MasterConfig mc;
        mc.h = model.h_full;
        mc.meter = meter;
        mc.particles = spec.particles;
        mc.nu = spec.nu;
        mc.hbar = spec.hbar;
        mc.mode = MasterMode::jump_averaged;
        const Generator gen = make_generator(mc);
        const MasterPath path = rk4_solve(gen, rho_start, spec.t_final,
                                          stable_step(gen, spec.t_final, spec.t_final / spec.n_samples / 100.0), times);
        write_table(dir / "master.tsv", hash, seed, master_columns(observables),
                    master_rows(path, observables, times.size()));
        const OracleComparison cmp = compare_to_master(run.stats, path, observables);
        summary.add("ensemble_vs_master_3se", cmp.pass, comparison_json(cmp));
      }
      ordered_json events{{"mean", run.stats.events_mean}, {"se", run.stats.events_se},
                          {"expected", spec.particles * spec.nu * spec.t_final}};
      summary.add("event_count_3se",
                  std::abs(run.stats.events_mean - spec.particles * spec.nu * spec.t_final) <=
                      3.0 * run.stats.events_se + 1e-12,
                  events);
    } else if (spec.experiment == "diffusion") {
      DiffusionConfig cfg;
      cfg.h = model.h_single;
      cfg.r = model.r;
      cfg.gamma = spec.gamma;
      cfg.hbar = spec.hbar;
      cfg.pointer = model.pointer;
      cfg.dt = spec.dt;
      cfg.seed = seed;
      cfg.particles = spec.particles;
      cfg.pair_interaction = model.pair;
      const DiffusionEngine engine(cfg);
      const StateVector eta = initial_state(spec);
      EnsembleRun run;
      if (spec.equation == "density") {
        DensityPathOptions opts;
        opts.scheme = spec.scheme == "euler-maruyama" ? DensityScheme::euler_maruyama : DensityScheme::positive;
        run = run_diffusive_density_ensemble(engine, DensityMatrix::pure(eta), spec.t_final, spec.n_traj,
                                             observables, times, spec.threads, opts);
      } else {
        run = run_diffusive_sse_ensemble(engine, eta, spec.t_final, spec.n_traj, observables, times, spec.threads,
                                         spec.equation == "coupled" ? WaveEquation::coupled : WaveEquation::diffusive);
      }
      write_ensemble_table(dir / "ensemble.tsv", hash, seed, run.stats);
      if (spec.records) write_trajectory_records(dir / "trajectories.jsonl", hash, seed, times, names, run.samples);
      if (spec.compare) {
        MasterConfig mc;
        mc.h = model.h_full;
        mc.r = model.r;
        mc.pointer = model.pointer;
        mc.particles = spec.particles;
        mc.gamma = spec.gamma;
        mc.hbar = spec.hbar;
        mc.mode = MasterMode::diffusive;
        const Generator gen = make_generator(mc);
        const MasterPath path =
            rk4_solve(gen, eta.amps() * eta.amps().adjoint(), spec.t_final,
                      stable_step(gen, spec.t_final, spec.t_final / spec.n_samples / 100.0), times);
        write_table(dir / "master.tsv", hash, seed, master_columns(observables),
                    master_rows(path, observables, times.size()));
        const OracleComparison cmp = compare_to_master(run.stats, path, observables);
        summary.add("ensemble_vs_master_3se", cmp.pass, comparison_json(cmp));
      }
    } else if (spec.experiment == "master") {
      MasterConfig mc;
      mc.h = model.h_full;
      mc.r = model.r;
      mc.pointer = model.pointer;
      mc.particles = spec.particles;
      mc.nu = spec.nu;
      mc.gamma = spec.gamma;
      mc.hbar = spec.hbar;
      if (spec.master_mode == "jump") {
        mc.meter = meter_for(spec.kappa);
        mc.mode = MasterMode::jump_averaged;
      } else {
        mc.mode = MasterMode::diffusive;
      }
      const Generator gen = make_generator(mc);
      const StateVector eta = initial_state(spec);
      const double step = stable_step(gen, spec.t_final, std::min(spec.dt, spec.t_final / spec.n_samples));
      const MasterPath path = rk4_solve(gen, eta.amps() * eta.amps().adjoint(), spec.t_final, step, times);
      write_table(dir / "master.tsv", hash, seed, master_columns(observables),
                  master_rows(path, observables, times.size()));
      const double trace_err = std::abs(path.rhos.back().trace().real() - 1.0);
      summary.add("trace_preserved", trace_err <= 1e-6, {{"trace_error", trace_err}});
    } else if (spec.experiment == "bridge") {
      DiffusionConfig cfg;
      cfg.h = model.h_single;
      cfg.r = model.r;
      cfg.gamma = spec.gamma;
      cfg.hbar = spec.hbar;
      cfg.pointer = model.pointer;
      cfg.particles = spec.particles;
      cfg.pair_interaction = model.pair;
      const BridgeReport report =
          jump_to_diffusion_bridge(cfg, spec.bridge_nus, spec.t_final, spec.bridge_tolerance);
      std::vector<std::vector<double>> rows;
      for (const auto& r : report.rows) rows.push_back({r.nu, r.kappa, r.generator_error, r.solution_error});
      write_table(dir / "bridge.tsv", hash, seed, {"nu", "kappa", "generator_error", "solution_error"}, rows);
      summary.add("bridge", report.pass,
                  {{"monotone", report.monotone},
                   {"final_error", report.rows.back().generator_error},
                   {"tolerance", report.tolerance}});
    }

    ordered_json out;
    out["spec_hash"] = hash;
    out["seed"] = seed;
    out["experiment"] = spec.experiment;
    out["checks"] = summary.checks;
    out["pass"] = summary.pass;
    write_json(dir / "summary.json", out);
    log << spec.experiment << ": " << (summary.pass ? "pass" : "FAIL") << " (" << dir.string() << ")\n";
    return summary.pass ? 0 : 1;
  } catch (const Error& e) {
    log << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    log << "error [io]: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace qtraj
