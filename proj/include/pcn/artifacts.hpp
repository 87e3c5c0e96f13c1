#pragma once

// CSV logs and the JSON manifest written for every run directory.
//
//   ground_truth.csv  time,link_id,rho
//   estimates.csv     period_end_time,source_id,router_index,e_raw,l_hat
//   accounting.csv    link_id,enqueued,dequeued,dropped,queued
//   acks.csv          time,source_id,ipid,ecn,sent_time
//   manifest.json     provenance plus the run parameters post-processing needs

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcn/error.hpp"
#include "pcn/sim.hpp"
#include "pcn/trace.hpp"

namespace pcn {

inline constexpr const char* kToolVersion = "1.0.0";

namespace fs = std::filesystem;

namespace detail {

inline std::string fmt_opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string("NA"); }

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t b = 0;
  while (true) {
    const auto c = line.find(',', b);
    out.push_back(line.substr(b, c == std::string::npos ? std::string::npos : c - b));
    if (c == std::string::npos) break;
    b = c + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
  return out;
}

inline std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + p.string() + "'");
  return os;
}

/// Reads a CSV with the given header, calling `row` for each data line.
inline void read_csv(const fs::path& p, const std::string& header,
                     const std::function<void(const std::vector<std::string>&, const std::string&)>& row) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError("missing artifact '" + p.string() + "'");
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != header)
    throw ValidationError(p.string() + ": expected header '" + header + "'");
  const auto width = split_csv(header).size();
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto f = split_csv(line);
    const auto where = p.string() + ":" + std::to_string(lineno);
    if (f.size() != width) throw ValidationError(where + ": expected " + std::to_string(width) + " columns");
    row(f, where);
  }
}

inline double num(const std::string& s, const std::string& where) {
  double v = 0.0;
  if (!parse_number(s, v)) throw ValidationError(where + ": bad number '" + s + "'");
  return v;
}

inline std::optional<double> opt_num(const std::string& s, const std::string& where) {
  if (s == "NA") return std::nullopt;
  return num(s, where);
}

template <class T>
T integer(const std::string& s, const std::string& where) {
  T v{};
  if (!parse_number(s, v)) throw ValidationError(where + ": bad integer '" + s + "'");
  return v;
}

}  // namespace detail

inline const std::vector<std::string>& artifact_files() {
  static const std::vector<std::string> files{"ground_truth.csv", "estimates.csv", "accounting.csv", "acks.csv"};
  return files;
}

inline void write_artifacts(const fs::path& dir, const RunArtifacts& a) {
  using detail::format_double;
  fs::create_directories(dir);
  {
    auto os = detail::open_out(dir / "ground_truth.csv");
    os << "time,link_id,rho\n";
    for (const auto& r : a.ground_truth) os << format_double(r.time) << ',' << r.link << ',' << format_double(r.rho) << '\n';
  }
  {
    auto os = detail::open_out(dir / "estimates.csv");
    os << "period_end_time,source_id,router_index,e_raw,l_hat\n";
    for (const auto& r : a.estimates)
      os << format_double(r.period_end) << ',' << r.source << ',' << r.router << ',' << detail::fmt_opt(r.e_raw) << ','
         << detail::fmt_opt(r.l_hat) << '\n';
  }
  {
    auto os = detail::open_out(dir / "accounting.csv");
    os << "link_id,enqueued,dequeued,dropped,queued\n";
    for (const auto& r : a.accounting)
      os << r.link << ',' << r.enqueued << ',' << r.dequeued << ',' << r.dropped << ',' << r.queued << '\n';
  }
  {
    auto os = detail::open_out(dir / "acks.csv");
    os << "time,source_id,ipid,ecn,sent_time\n";
    for (const auto& r : a.acks)
      os << format_double(r.time) << ',' << r.source << ',' << r.ipid << ',' << (r.ecn ? 1 : 0) << ','
         << format_double(r.sent_time) << '\n';
  }
}

inline nlohmann::json run_info_json(const RunInfo& info) {
  nlohmann::json flows = nlohmann::json::array();
  for (const auto& f : info.flows)
    flows.push_back({{"name", f.name},
                     {"M", f.M},
                     {"presignal", f.presignal},
                     {"hop_count", f.hop_count},
                     {"start", f.start},
                     {"router_links", f.router_links}});
  return {{"duration", info.duration},
          {"t_rho", info.t_rho},
          {"t_p", info.t_p},
          {"warmup_fraction", info.warmup_fraction},
          {"training_fraction", info.training_fraction},
          {"seed", info.seed},
          {"flows", flows},
          {"monitored_links", info.monitored_links}};
}

inline RunInfo run_info_from_json(const nlohmann::json& j) {
  RunInfo info;
  info.duration = j.at("duration").get<double>();
  info.t_rho = j.at("t_rho").get<double>();
  info.t_p = j.at("t_p").get<double>();
  info.warmup_fraction = j.at("warmup_fraction").get<double>();
  info.training_fraction = j.at("training_fraction").get<double>();
  info.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& f : j.at("flows")) {
    FlowInfo fi;
    fi.name = f.at("name").get<std::string>();
    fi.M = f.at("M").get<int>();
    fi.presignal = f.at("presignal").get<bool>();
    fi.hop_count = f.at("hop_count").get<int>();
    fi.start = f.at("start").get<double>();
    fi.router_links = f.at("router_links").get<std::vector<std::string>>();
    info.flows.push_back(std::move(fi));
  }
  info.monitored_links = j.at("monitored_links").get<std::vector<std::string>>();
  return info;
}

struct RunManifest {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string output_dir;
  std::string tool_version = kToolVersion;
  std::string timestamp;
  RunInfo run;
};

inline std::string utc_timestamp() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_manifest(const fs::path& dir, const RunManifest& m) {
  nlohmann::json j{{"tool", "pcnsim"},
                   {"tool_version", m.tool_version},
                   {"config", m.config_path},
                   {"seed", m.seed},
                   {"output_dir", m.output_dir},
                   {"timestamp", m.timestamp},
                   {"files", artifact_files()},
                   {"run", run_info_json(m.run)}};
  auto os = detail::open_out(dir / "manifest.json");
  os << j.dump(2) << '\n';
}

inline RunManifest read_manifest(const fs::path& dir) {
  const auto p = dir / "manifest.json";
  std::ifstream in(p);
  if (!in) throw ValidationError("missing manifest '" + p.string() + "'");
  try {
    const auto j = nlohmann::json::parse(in);
    RunManifest m;
    m.config_path = j.at("config").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.output_dir = j.at("output_dir").get<std::string>();
    m.tool_version = j.at("tool_version").get<std::string>();
    m.timestamp = j.at("timestamp").get<std::string>();
    m.run = run_info_from_json(j.at("run"));
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(p.string() + ": malformed manifest (" + e.what() + ")");
  }
}

inline RunArtifacts read_artifacts(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("run directory '" + dir.string() + "' does not exist");
  RunArtifacts a;
  a.info = read_manifest(dir).run;
  detail::read_csv(dir / "ground_truth.csv", "time,link_id,rho", [&](const auto& f, const auto& w) {
    a.ground_truth.push_back({detail::num(f[0], w), f[1], detail::num(f[2], w)});
  });
  detail::read_csv(dir / "estimates.csv", "period_end_time,source_id,router_index,e_raw,l_hat",
                   [&](const auto& f, const auto& w) {
                     a.estimates.push_back({detail::num(f[0], w), f[1], detail::integer<int>(f[2], w),
                                            detail::opt_num(f[3], w), detail::opt_num(f[4], w)});
                   });
  detail::read_csv(dir / "accounting.csv", "link_id,enqueued,dequeued,dropped,queued", [&](const auto& f, const auto& w) {
    a.accounting.push_back({f[0], detail::integer<std::uint64_t>(f[1], w), detail::integer<std::uint64_t>(f[2], w),
                            detail::integer<std::uint64_t>(f[3], w), detail::integer<std::uint64_t>(f[4], w)});
  });
  detail::read_csv(dir / "acks.csv", "time,source_id,ipid,ecn,sent_time", [&](const auto& f, const auto& w) {
    const auto ecn = detail::integer<int>(f[3], w);
    if (ecn != 0 && ecn != 1) throw ValidationError(w + ": ecn must be 0 or 1");
    a.acks.push_back({detail::num(f[0], w), f[1], detail::integer<std::uint16_t>(f[2], w), ecn == 1, detail::num(f[4], w)});
  });
  return a;
}

}  // namespace pcn
