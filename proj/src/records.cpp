#include "qtraj/records.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "qtraj/error.hpp"

namespace qtraj {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string header_line(const std::string& hash, std::uint64_t seed) {
  return "# spec_hash=" + hash + " seed=" + std::to_string(seed);
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::validation, "cannot write " + path.string());
  return out;
}

std::string json_array(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += format_double(v[i]);
  }
  return s + "]";
}

std::string json_string(const std::string& s) { return nlohmann::json(s).dump(); }

}  // namespace

void write_table(const std::filesystem::path& path, const std::string& hash, std::uint64_t seed,
                 const std::vector<std::string>& columns, const std::vector<std::vector<double>>& rows) {
  std::ofstream out = open_out(path);
  out << header_line(hash, seed) << "\n";
  for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "\t" : "") << columns[c];
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "\t" : "") << format_double(row[c]);
    out << "\n";
  }
}

void write_ensemble_table(const std::filesystem::path& path, const std::string& hash, std::uint64_t seed,
                          const EnsembleStats& stats) {
  std::vector<std::string> columns{"t"};
  for (const auto& name : stats.names) {
    columns.push_back(name + "_mean");
    columns.push_back(name + "_se");
  }
  columns.push_back("norm2_mean");
  columns.push_back("norm2_se");
  const bool density = !stats.entropy.mean.empty();
  if (density) {
    columns.push_back("entropy_mean");
    columns.push_back("entropy_se");
  }
  std::vector<std::vector<double>> rows;
  for (std::size_t t = 0; t < stats.times.size(); ++t) {
    std::vector<double> row{stats.times[t]};
    for (const auto& o : stats.observables) {
      row.push_back(o.mean[t]);
      row.push_back(o.se[t]);
    }
    row.push_back(stats.norm2.mean[t]);
    row.push_back(stats.norm2.se[t]);
    if (density) {
      row.push_back(stats.entropy.mean[t]);
      row.push_back(stats.entropy.se[t]);
    }
    rows.push_back(row);
  }
  write_table(path, hash, seed, columns, rows);
}

void write_trajectory_records(const std::filesystem::path& path, const std::string& hash, std::uint64_t seed,
                              const std::vector<double>& times, const std::vector<std::string>& names,
                              const std::vector<TrajectorySample>& samples) {
  std::ofstream out = open_out(path);
  out << "{\"spec_hash\":" << json_string(hash) << ",\"seed\":" << seed << ",\"times\":" << json_array(times)
      << "}\n";
  for (const auto& s : samples) {
    out << "{\"index\":" << s.index << ",\"seed\":" << seed << ",\"events\":[";
    for (std::size_t e = 0; e < s.events.size(); ++e) {
      if (e) out << ",";
      out << "[" << format_double(s.events[e].first) << "," << format_double(s.events[e].second) << "]";
    }
    out << "],\"final_norm2\":" << format_double(s.final_norm2) << ",\"observables\":{";
    for (std::size_t o = 0; o < names.size(); ++o) {
      if (o) out << ",";
      out << json_string(names[o]) << ":" << json_array(s.observables[o]);
    }
    out << "}";
    if (!s.entropy.empty()) {
      out << ",\"trace\":" << json_array(s.norm2) << ",\"entropy\":" << json_array(s.entropy)
          << ",\"min_eigenvalue\":" << json_array(s.min_eigenvalue);
    }
    out << "}\n";
  }
}

TrajectoryRecord parse_trajectory_record(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::parse, std::string("trajectory record: ") + e.what());
  }
  TrajectoryRecord r;
  try {
    r.index = j.at("index").get<std::uint64_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& e : j.at("events")) r.events.emplace_back(e.at(0).get<double>(), e.at(1).get<double>());
    r.final_norm2 = j.at("final_norm2").get<double>();
    for (const auto& [name, values] : j.at("observables").items())
      r.observables.emplace_back(name, values.get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("trajectory record: ") + e.what());
  }
  return r;
}

}  // namespace qtraj
