#include "qtraj/runspec.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "qtraj/error.hpp"

namespace qtraj {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

const std::set<std::string> kExperiments{"single-kick", "jump", "many-body", "diffusion", "master", "bridge"};
const std::set<std::string> kPresets{"two-level", "lattice-particle", "two-atoms", "custom"};

const std::set<std::string> kKeys{
    "experiment", "preset", "d", "hopping", "H", "R", "particles", "pair_coupling", "kappa", "nu", "gamma", "hbar",
    "grid_points", "modulation", "pointer_table", "mode", "sector", "dt", "scheme", "equation", "master_mode",
    "initial_state", "T", "n_samples", "observables", "seed", "n_traj", "threads", "out", "compare", "records",
    "kick", "bridge"};

[[noreturn]] void field_error(const std::string& field, const std::string& what) {
  fail(ErrorKind::parse, "field '" + field + "': " + what);
}

Complex complex_from(const json& v, const std::string& field) {
  if (v.is_number()) return {v.get<double>(), 0.0};
  if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
    return {v[0].get<double>(), v[1].get<double>()};
  field_error(field, "expected a number or a [re, im] pair");
}

Matrix matrix_from(const json& v, const std::string& field) {
  if (!v.is_array() || v.empty()) field_error(field, "expected a non-empty array of rows");
  const int n = static_cast<int>(v.size());
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) {
    if (!v[i].is_array() || static_cast<int>(v[i].size()) != n) field_error(field, "matrix must be square");
    for (int j = 0; j < n; ++j) m(i, j) = complex_from(v[i][j], field);
  }
  return m;
}

Vector vector_from(const json& v, const std::string& field) {
  if (!v.is_array() || v.empty()) field_error(field, "expected a non-empty array");
  Vector out(static_cast<int>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<int>(i)) = complex_from(v[i], field);
  return out;
}

ordered_json complex_json(Complex c) { return ordered_json::array({c.real(), c.imag()}); }

ordered_json matrix_json(const Matrix& m) {
  ordered_json rows = ordered_json::array();
  for (int i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(complex_json(m(i, j)));
    rows.push_back(row);
  }
  return rows;
}

template <class T>
T get_field(const json& obj, const std::string& key, const T& fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    field_error(key, "wrong type");
  }
}

int line_of(const std::string& text, std::size_t byte) {
  int line = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

void check(bool ok, const std::string& message) {
  if (!ok) fail(ErrorKind::validation, message);
}

int full_dim(const RunSpec& s) { return int_pow(s.d, s.particles); }

}  // namespace

RunSpec parse_runspec(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    std::ostringstream os;
    os << "line " << line_of(text, e.byte) << ": " << e.what();
    fail(ErrorKind::parse, os.str());
  }
  if (!root.is_object()) fail(ErrorKind::parse, "line 1: top level must be an object");
  for (const auto& [key, value] : root.items())
    if (!kKeys.count(key)) field_error(key, "unknown field");

  RunSpec s;
  s.experiment = get_field(root, "experiment", s.experiment);
  s.preset = get_field(root, "preset", s.preset);
  if (s.preset == "lattice-particle") s.d = 8;
  if (s.preset == "two-atoms") s.particles = 2;
  s.d = get_field(root, "d", s.d);
  s.hopping = get_field(root, "hopping", s.hopping);
  if (root.contains("H")) s.h = matrix_from(root["H"], "H");
  if (root.contains("R")) s.r = matrix_from(root["R"], "R");
  if (s.preset == "custom" && s.r) s.d = static_cast<int>(s.r->rows());
  s.particles = get_field(root, "particles", s.particles);
  s.pair_coupling = get_field(root, "pair_coupling", s.pair_coupling);
  s.kappa = get_field(root, "kappa", s.kappa);
  s.nu = get_field(root, "nu", s.nu);
  s.gamma = get_field(root, "gamma", s.gamma);
  s.hbar = get_field(root, "hbar", s.hbar);
  s.grid_points = get_field(root, "grid_points", s.grid_points);
  s.modulation = get_field(root, "modulation", s.modulation);
  s.pointer_table = get_field(root, "pointer_table", s.pointer_table);
  s.mode = get_field(root, "mode", s.mode);
  s.sector = get_field(root, "sector", s.sector);
  s.dt = get_field(root, "dt", s.dt);
  s.scheme = get_field(root, "scheme", s.scheme);
  s.equation = get_field(root, "equation", s.equation);
  s.master_mode = get_field(root, "master_mode", s.master_mode);
  if (root.contains("initial_state")) {
    const json& v = root["initial_state"];
    if (v.is_string()) {
      s.initial_state = v.get<std::string>();
    } else {
      s.initial_state = "amplitudes";
      s.initial_amplitudes = vector_from(v, "initial_state");
    }
  }
  s.t_final = get_field(root, "T", s.t_final);
  s.n_samples = get_field(root, "n_samples", s.n_samples);
  if (root.contains("observables")) {
    const json& list = root["observables"];
    if (!list.is_array()) field_error("observables", "expected an array");
    s.observables.clear();
    for (const auto& o : list) {
      if (o.is_string()) {
        s.observables.push_back({o.get<std::string>(), std::nullopt});
      } else if (o.is_object() && o.contains("name") && o.contains("matrix") && o["name"].is_string()) {
        s.observables.push_back({o["name"].get<std::string>(), matrix_from(o["matrix"], "observables")});
      } else {
        field_error("observables", "entries are names or {\"name\", \"matrix\"} objects");
      }
    }
  }
  if (root.contains("seed")) {
    const json& v = root["seed"];
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
      field_error("seed", "expected a nonnegative integer");
    s.seed = v.get<std::uint64_t>();
  }
  s.n_traj = get_field(root, "n_traj", s.n_traj);
  s.threads = get_field(root, "threads", s.threads);
  s.out = get_field(root, "out", s.out);
  s.compare = get_field(root, "compare", s.compare);
  s.records = get_field(root, "records", s.records);
  if (root.contains("kick")) {
    const json& k = root["kick"];
    if (!k.is_object()) field_error("kick", "expected an object");
    s.kick_lambdas = get_field(k, "lambdas", s.kick_lambdas);
    s.kick_t0 = get_field(k, "t0", s.kick_t0);
    s.kick_t = get_field(k, "t", s.kick_t);
  }
  if (root.contains("bridge")) {
    const json& b = root["bridge"];
    if (!b.is_object()) field_error("bridge", "expected an object");
    s.bridge_nus = get_field(b, "nus", s.bridge_nus);
    s.bridge_tolerance = get_field(b, "tolerance", s.bridge_tolerance);
  }
  validate_runspec(s);
  return s;
}

RunSpec load_runspec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::validation, "cannot open spec file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_runspec(buf.str());
}

void validate_runspec(const RunSpec& s) {
  check(kExperiments.count(s.experiment) > 0,
        "experiment must be one of single-kick, jump, many-body, diffusion, master, bridge");
  check(kPresets.count(s.preset) > 0, "preset must be one of two-level, lattice-particle, two-atoms, custom");
  if (s.particles > 4) fail(ErrorKind::capacity, "particles must be in 1..4 (dense d^M storage)");
  check(s.particles >= 1, "particles ≥ 1");
  check(s.d >= 2, "d ≥ 2");
  if (s.preset == "two-level" || s.preset == "two-atoms") check(s.d == 2, "d = 2 for the " + s.preset + " preset");
  if (s.preset == "custom") {
    check(s.h.has_value() && s.r.has_value(), "custom preset needs both H and R");
    check(s.h->rows() == s.r->rows(), "H and R must have the same dimension");
    check(hermiticity_defect(*s.h) <= 1e-12, "H must be Hermitian");
    check(hermiticity_defect(*s.r) <= 1e-12, "R must be Hermitian");
  } else {
    check(!s.h && !s.r, "H and R are only read with the custom preset");
  }
  if (int_pow(s.d, s.particles) > 4096) fail(ErrorKind::capacity, "d^M exceeds 4096");
  check(std::isfinite(s.hopping), "hopping must be finite");
  check(std::isfinite(s.pair_coupling), "pair_coupling must be finite");
  check(s.kappa >= 0.0 && std::isfinite(s.kappa), "kappa ≥ 0");
  check(s.nu >= 0.0 && std::isfinite(s.nu), "nu ≥ 0");
  check(std::isfinite(s.gamma), "gamma must be finite");
  check(s.hbar > 0.0, "hbar > 0");
  check(s.grid_points >= 16, "grid_points ≥ 16");
  check(std::isfinite(s.modulation), "modulation must be finite");
  if (!s.pointer_table.empty())
    check(std::filesystem::exists(s.pointer_table), "pointer_table: file " + s.pointer_table + " does not exist");
  check(s.mode == "normalized" || s.mode == "linear", "mode must be normalized or linear");
  check(s.sector == "full" || s.sector == "symmetric", "sector must be full or symmetric");
  check(s.dt > 0.0, "dt > 0");
  check(s.scheme == "positive" || s.scheme == "euler-maruyama", "scheme must be positive or euler-maruyama");
  check(s.equation == "sse" || s.equation == "coupled" || s.equation == "density",
        "equation must be sse, coupled or density");
  check(s.master_mode == "jump" || s.master_mode == "diffusive", "master_mode must be jump or diffusive");
  check(s.t_final > 0.0 && std::isfinite(s.t_final), "T > 0");
  check(s.n_samples >= 1, "n_samples ≥ 1");
  check(s.n_traj >= 2, "n_traj ≥ 2");
  check(s.threads >= 1, "threads ≥ 1");
  check(!s.out.empty(), "out must name a directory");

  const int dim = full_dim(s);
  if (s.initial_state == "amplitudes") {
    check(s.initial_amplitudes.has_value(), "initial_state amplitudes missing");
    check(s.initial_amplitudes->size() == dim, "initial_state must have d^M amplitudes");
    check(s.initial_amplitudes->norm() > 0.0, "initial_state must be nonzero");
  } else if (s.initial_state.rfind("basis:", 0) == 0) {
    int k = -1;
    check(std::sscanf(s.initial_state.c_str(), "basis:%d", &k) == 1 && k >= 0 && k < dim,
          "initial_state basis:k needs 0 ≤ k < d^M");
  } else {
    check(s.initial_state == "uniform", "initial_state must be \"uniform\", \"basis:k\" or an amplitude array");
  }
  check(!s.observables.empty(), "observables must not be empty");
  for (const auto& o : s.observables) {
    if (o.matrix) {
      check(o.matrix->rows() == dim, "observable '" + o.name + "' must be d^M x d^M");
      check(hermiticity_defect(*o.matrix) <= 1e-12, "observable '" + o.name + "' must be Hermitian");
      continue;
    }
    int j = -1, k = -1;
    if (o.name == "R" || o.name == "H") continue;
    if (std::sscanf(o.name.c_str(), "projector:%d", &j) == 1) {
      check(j >= 0 && j < dim, "observable " + o.name + ": index out of range");
    } else if (std::sscanf(o.name.c_str(), "coherence:%d:%d", &j, &k) == 2) {
      check(j >= 0 && j < dim && k >= 0 && k < dim && j != k, "observable " + o.name + ": indices out of range");
    } else {
      check(false, "observable '" + o.name + "' is not R, H, projector:k, coherence:j:k or an inline matrix");
    }
  }

  if (s.experiment == "jump" || s.experiment == "single-kick")
    check(s.particles == 1, s.experiment + " runs are single-particle; use many-body for particles > 1");
  if (s.experiment == "diffusion" && s.equation != "density")
    check(s.particles == 1, "equation " + s.equation + " is single-particle; use density for particles > 1");
  check(s.kick_t0 <= 0.0 && s.kick_t > 0.0, "kick.t0 ≤ 0 < kick.t (the kick happens at t = 0)");
  check(!s.bridge_nus.empty(), "bridge.nus must not be empty");
  for (std::size_t i = 0; i < s.bridge_nus.size(); ++i) {
    check(s.bridge_nus[i] > 0.0, "bridge.nus > 0");
    if (i > 0) check(s.bridge_nus[i] > s.bridge_nus[i - 1], "bridge.nus must be increasing");
  }
  check(s.bridge_tolerance > 0.0, "bridge.tolerance > 0");
}

ordered_json to_json(const RunSpec& s) {
  ordered_json j;
  j["experiment"] = s.experiment;
  j["preset"] = s.preset;
  j["d"] = s.d;
  j["hopping"] = s.hopping;
  if (s.h) j["H"] = matrix_json(*s.h);
  if (s.r) j["R"] = matrix_json(*s.r);
  j["particles"] = s.particles;
  j["pair_coupling"] = s.pair_coupling;
  j["kappa"] = s.kappa;
  j["nu"] = s.nu;
  j["gamma"] = s.gamma;
  j["hbar"] = s.hbar;
  j["grid_points"] = s.grid_points;
  j["modulation"] = s.modulation;
  j["pointer_table"] = s.pointer_table;
  j["mode"] = s.mode;
  j["sector"] = s.sector;
  j["dt"] = s.dt;
  j["scheme"] = s.scheme;
  j["equation"] = s.equation;
  j["master_mode"] = s.master_mode;
  if (s.initial_amplitudes) {
    ordered_json amps = ordered_json::array();
    for (int i = 0; i < s.initial_amplitudes->size(); ++i) amps.push_back(complex_json((*s.initial_amplitudes)(i)));
    j["initial_state"] = amps;
  } else {
    j["initial_state"] = s.initial_state;
  }
  j["T"] = s.t_final;
  j["n_samples"] = s.n_samples;
  ordered_json obs = ordered_json::array();
  for (const auto& o : s.observables) {
    if (o.matrix) {
      ordered_json entry;
      entry["name"] = o.name;
      entry["matrix"] = matrix_json(*o.matrix);
      obs.push_back(entry);
    } else {
      obs.push_back(o.name);
    }
  }
  j["observables"] = obs;
  j["seed"] = s.seed;
  j["n_traj"] = s.n_traj;
  j["threads"] = s.threads;
  j["out"] = s.out;
  j["compare"] = s.compare;
  j["records"] = s.records;
  j["kick"] = {{"lambdas", s.kick_lambdas}, {"t0", s.kick_t0}, {"t", s.kick_t}};
  j["bridge"] = {{"nus", s.bridge_nus}, {"tolerance", s.bridge_tolerance}};
  return j;
}

std::string dump_runspec(const RunSpec& spec) { return to_json(spec).dump(2) + "\n"; }

std::string spec_hash(const RunSpec& spec) {
  ordered_json j = to_json(spec);
  j.erase("threads");
  j.erase("out");
  const std::string text = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string experiment_for_command(const std::string& command) {
  if (command == "kick") return "single-kick";
  if (command == "many") return "many-body";
  if (command == "diffuse") return "diffusion";
  return command;
}

}  // namespace qtraj
