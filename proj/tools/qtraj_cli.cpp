// Batch front-end: one subcommand per experiment plus the acceptance selftest.
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "qtraj/acceptance.hpp"
#include "qtraj/execute.hpp"
#include "qtraj/runspec.hpp"

namespace {

struct Flags {
  std::string spec;
  std::optional<std::uint64_t> seed;
  std::optional<int> traj;
  std::optional<int> threads;
  std::optional<std::string> out;
};

void add_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--spec", f.spec, "JSON run spec");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--traj", f.traj, "number of trajectories");
  cmd->add_option("--threads", f.threads, "worker threads (does not change results)");
  cmd->add_option("--out", f.out, "output directory");
}

int run_experiment(const std::string& command, const Flags& f) {
  try {
    qtraj::RunSpec spec = f.spec.empty() ? qtraj::RunSpec{} : qtraj::load_runspec(f.spec);
    spec.experiment = qtraj::experiment_for_command(command);
    if (f.spec.empty() && spec.experiment == "many-body") {
      spec.preset = "two-atoms";
      spec.particles = 2;
    }
    if (f.seed) spec.seed = *f.seed;
    if (f.traj) spec.n_traj = *f.traj;
    if (f.threads) spec.threads = *f.threads;
    if (f.out) spec.out = *f.out;
    qtraj::validate_runspec(spec);
    return qtraj::execute(spec, std::cout);
  } catch (const qtraj::Error& e) {
    std::cerr << "error [" << qtraj::to_string(e.kind()) << "]: " << e.what() << "\n";
    return qtraj::exit_code_for(e.kind());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qtraj: continuously monitored quantum systems"};
  app.require_subcommand(1);

  Flags flags;
  for (const char* name : {"kick", "jump", "many", "diffuse", "master", "bridge"}) {
    CLI::App* cmd = app.add_subcommand(name, std::string("run the ") + qtraj::experiment_for_command(name) +
                                                 " experiment");
    add_flags(cmd, flags);
  }

  int self_threads = 1;
  int criterion = 0;
  std::string scratch;
  CLI::App* self = app.add_subcommand("selftest", "run the acceptance suite and print the pass/fail table");
  self->add_option("--threads", self_threads, "worker threads");
  self->add_option("--criterion", criterion, "run a single criterion (1-11)");
  self->add_option("--out", scratch, "scratch directory for the determinism runs");

  CLI11_PARSE(app, argc, argv);

  if (self->parsed()) {
    qtraj::AcceptanceOptions opts;
    opts.threads = self_threads;
    if (!scratch.empty()) opts.scratch = scratch;
    bool all = true;
    if (criterion > 0) {
      const auto r = qtraj::run_criterion(criterion, opts);
      std::cout << qtraj::format_result(r) << "\n";
      all = r.pass;
    } else {
      for (const auto& r : qtraj::run_acceptance(opts, std::cout)) all = all && r.pass;
    }
    return all ? 0 : 1;
  }
  for (CLI::App* sub : app.get_subcommands()) return run_experiment(sub->get_name(), flags);
  return 2;
}
