#pragma once

// pcnsim subcommands. Exit codes: 0 success, 1 validation (bad flags, config,
// trace, artifacts or series), 2 runtime failure.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pcn/artifacts.hpp"
#include "pcn/config.hpp"
#include "pcn/error.hpp"
#include "pcn/eval.hpp"
#include "pcn/forecast.hpp"
#include "pcn/sim.hpp"
#include "pcn/trace.hpp"

namespace pcn::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kRuntime = 2 };

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

inline LogLevel log_level_from_env() {
  const char* v = std::getenv("PCN_LOG_LEVEL");
  if (!v) return LogLevel::Info;
  const std::string s(v);
  if (s == "error") return LogLevel::Error;
  if (s == "debug") return LogLevel::Debug;
  return LogLevel::Info;
}

class Log {
 public:
  explicit Log(std::ostream& os, LogLevel level = log_level_from_env()) : os_(os), level_(level) {}
  void error(const std::string& m) const { os_ << "error: " << m << '\n'; }
  void info(const std::string& m) const {
    if (level_ >= LogLevel::Info) os_ << "info: " << m << '\n';
  }
  void debug(const std::string& m) const {
    if (level_ >= LogLevel::Debug) os_ << "debug: " << m << '\n';
  }

 private:
  std::ostream& os_;
  LogLevel level_;
};

struct RunOptions {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
};

struct EvalOptionsCli {
  std::string run_dir;
  std::string tp = "0.2,0.4,0.8,1.6,3.2";
  std::string out;
};

struct AcfOptions {
  std::string series;
  int diff = 1;
  int max_lag = 20;
};

struct GenTraceOptions {
  std::string model;
  std::string params;
  double duration = 0.0;
  std::uint64_t seed = 0;
  std::string out;
};

inline std::vector<double> parse_tp_list(const std::string& text) {
  std::vector<double> out;
  std::size_t b = 0;
  while (b <= text.size()) {
    const auto c = text.find(',', b);
    const auto item = detail::trim(std::string_view(text).substr(b, c == std::string::npos ? std::string::npos : c - b));
    double v = 0.0;
    if (!detail::parse_number(item, v) || !(v > 0.0))
      throw ValidationError("bad t_p value '" + std::string(item) + "' in --tp");
    out.push_back(v);
    if (c == std::string::npos) break;
    b = c + 1;
  }
  return out;
}

inline std::vector<double> read_series_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open series file '" + path + "'");
  std::vector<double> v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    double x = 0.0;
    if (!detail::parse_number(t, x) || !std::isfinite(x))
      throw ValidationError(path + ":" + std::to_string(lineno) + ": expected one number per line");
    v.push_back(x);
  }
  if (v.empty()) throw ValidationError(path + ": series is empty");
  return v;
}

inline void cmd_run(const RunOptions& o, const Log& log) {
  auto cfg = load_config(o.config);
  cfg.seed = o.seed;
  log.info("simulating " + detail::format_double(cfg.duration) + " s from " + o.config);
  const auto art = run(cfg);
  const fs::path dir(o.out);
  write_artifacts(dir, art);
  RunManifest m;
  m.config_path = fs::absolute(o.config).lexically_normal().string();
  m.seed = o.seed;
  m.output_dir = fs::absolute(dir).lexically_normal().string();
  m.timestamp = utc_timestamp();
  m.run = art.info;
  write_manifest(dir, m);
  log.info("wrote " + std::to_string(art.ground_truth.size()) + " load-factor samples, " +
           std::to_string(art.acks.size()) + " ACKs to " + o.out);
}

inline void cmd_eval(const EvalOptionsCli& o, const Log& log) {
  const auto tps = parse_tp_list(o.tp);
  const auto art = read_artifacts(o.run_dir);
  for (double tp : tps)
    if (!is_multiple_of(tp, art.info.t_rho))
      throw ValidationError("t_p " + detail::format_double(tp) + " is not a multiple of t_rho " +
                            detail::format_double(art.info.t_rho));
  const auto report = evaluate(art, tps);
  std::ofstream os(o.out, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + o.out + "'");
  write_eval_csv(os, report);
  std::size_t insufficient = 0;
  for (const auto& c : report.cells) insufficient += !c.rmse;
  log.info("wrote " + std::to_string(report.cells.size()) + " report rows to " + o.out);
  if (insufficient) log.info(std::to_string(insufficient) + " rows have insufficient data");
}

inline void cmd_acf(const AcfOptions& o, std::ostream& out) {
  const auto s = difference(Series(read_series_file(o.series)), o.diff);
  if (o.max_lag < 0 || static_cast<std::size_t>(o.max_lag) >= s.size())
    throw ValidationError("--max-lag must be smaller than the differenced series length (" + std::to_string(s.size()) +
                          ")");
  const auto a = acf(s, o.max_lag);
  const auto p = pacf(s, o.max_lag);
  out << "function,lag,value,band\n";
  for (std::size_t k = 0; k < a.values.size(); ++k)
    out << "acf," << k << ',' << detail::format_double(a.values[k]) << ',' << detail::format_double(a.band) << '\n';
  for (std::size_t k = 0; k < p.values.size(); ++k)
    out << "pacf," << k << ',' << detail::format_double(p.values[k]) << ',' << detail::format_double(p.band) << '\n';
}

inline void cmd_gen_trace(const GenTraceOptions& o, const Log& log) {
  const auto flow = gen_synthetic_trace(parse_model(o.model), parse_params(o.params), o.duration, o.seed);
  std::ofstream os(o.out, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + o.out + "'");
  write_trace(os, flow.packets);
  log.info("wrote " + std::to_string(flow.packets.size()) + " packets to " + o.out);
}

/// Parses argv and dispatches. Streams are injectable for tests.
inline int main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  const Log log(err);
  CLI::App app{"pcnsim: one-bit probabilistic congestion notification simulator"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  RunOptions run_o;
  auto* run_cmd = app.add_subcommand("run", "simulate a topology and write run artifacts");
  run_cmd->add_option("--config", run_o.config, "topology/flow config file")->required();
  run_cmd->add_option("--seed", run_o.seed, "master RNG seed")->required();
  run_cmd->add_option("--out", run_o.out, "output directory")->required();

  EvalOptionsCli eval_o;
  auto* eval_cmd = app.add_subcommand("eval", "score raw and corrected estimators over a t_P sweep");
  eval_cmd->add_option("--run", eval_o.run_dir, "run directory written by `run`")->required();
  eval_cmd->add_option("--tp", eval_o.tp, "comma-separated t_P values in seconds")->capture_default_str();
  eval_cmd->add_option("--out", eval_o.out, "report CSV path")->required();

  AcfOptions acf_o;
  auto* acf_cmd = app.add_subcommand("acf", "ACF and PACF of a (differenced) series, CSV on stdout");
  acf_cmd->add_option("--series", acf_o.series, "file with one value per line")->required();
  acf_cmd->add_option("--diff", acf_o.diff, "differencing order")->capture_default_str()->check(CLI::NonNegativeNumber);
  acf_cmd->add_option("--max-lag", acf_o.max_lag, "largest lag")->capture_default_str()->check(CLI::NonNegativeNumber);

  GenTraceOptions gen_o;
  auto* gen_cmd = app.add_subcommand("gen-trace", "generate a synthetic background trace");
  gen_cmd->add_option("--model", gen_o.model, "poisson | onoff-mmpp")->required();
  gen_cmd->add_option("--params", gen_o.params, "key=value,... generator parameters")->required();
  gen_cmd->add_option("--duration", gen_o.duration, "seconds")->required();
  gen_cmd->add_option("--seed", gen_o.seed, "RNG seed")->required();
  gen_cmd->add_option("--out", gen_o.out, "trace file to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kValidation;
  }

  try {
    if (*run_cmd) cmd_run(run_o, log);
    else if (*eval_cmd) cmd_eval(eval_o, log);
    else if (*acf_cmd) cmd_acf(acf_o, out);
    else if (*gen_cmd) cmd_gen_trace(gen_o, log);
  } catch (const ValidationError& e) {
    log.error(e.what());
    return kValidation;
  } catch (const std::exception& e) {
    log.error(e.what());
    return kRuntime;
  }
  return kOk;
}

}  // namespace pcn::cli
