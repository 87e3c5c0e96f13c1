#pragma once

// Declarative simulation config. Grammar (see docs/config.md):
//
//   # comment (also allowed after a value)
//   [sim]                 key = value settings for timing and Eq.-1 constants
//   [nodes]               hosts = A B ...   routers = R1 R2 ...
//   [link FROM TO]        capacity, delay, queue_limit, duplex
//   [pcn NAME]            source, destination, rate, M, presignal, start
//   [background NAME]     source, sink, and either file or model + params

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pcn/error.hpp"
#include "pcn/loadfactor.hpp"
#include "pcn/protocol.hpp"
#include "pcn/trace.hpp"

namespace pcn {

enum class NodeKind { Host, Router };

struct NodeSpec {
  std::string name;
  NodeKind kind = NodeKind::Host;
};

struct LinkSpec {
  std::string from;
  std::string to;
  double capacity = 0.0;  // packets per second
  double delay = 0.0;     // seconds
  int queue_limit = 100;  // packets, including the one in service

  std::string id() const { return from + "->" + to; }
};

struct PcnFlowSpec {
  std::string name;
  std::string source;
  std::string destination;
  double rate = 0.0;  // probe packets per second
  double start = 0.0;
  int M = kDefaultRouterSlots;
  bool presignal = false;
};

struct BackgroundFlowSpec {
  std::string name;
  std::string source;
  std::string sink;
  std::optional<std::string> file;  // resolved against the config directory
  std::optional<TrafficModel> model;
  std::map<std::string, double> params;
};

struct SimConfig {
  double duration = 60.0;
  double t_rho = 0.2;
  double t_p = 0.2;
  double queue_tick = 0.01;
  double qhat_weight = 0.125;
  double kappa_q = 0.5;
  double gamma = 0.98;
  AffineTransform transform;
  double warmup_fraction = 0.10;
  double training_fraction = 0.10;
  double max_probe_fraction = 0.10;
  std::uint64_t seed = 0;

  std::vector<NodeSpec> nodes;
  std::vector<LinkSpec> links;
  std::vector<PcnFlowSpec> pcn_flows;
  std::vector<BackgroundFlowSpec> background;
  std::string base_dir = ".";

  const NodeSpec* find_node(const std::string& name) const {
    for (const auto& n : nodes)
      if (n.name == name) return &n;
    return nullptr;
  }
};

/// True when `value` is an integer multiple of `unit` up to rounding.
inline bool is_multiple_of(double value, double unit) {
  const double k = value / unit;
  return k >= 1.0 - 1e-9 && std::abs(k - std::round(k)) < 1e-6;
}

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ValidationError(where + ": expected a boolean, got '" + v + "'");
}

inline double parse_real(const std::string& v, const std::string& where) {
  double d = 0.0;
  if (!parse_number(v, d) || !std::isfinite(d)) throw ValidationError(where + ": expected a number, got '" + v + "'");
  return d;
}

inline int parse_int(const std::string& v, const std::string& where) {
  int i = 0;
  if (!parse_number(v, i)) throw ValidationError(where + ": expected an integer, got '" + v + "'");
  return i;
}

inline std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

struct Section {
  std::string kind;
  std::vector<std::string> args;
  std::size_t line = 0;
  std::vector<std::pair<std::string, std::string>> entries;
  std::vector<std::size_t> entry_lines;
};

}  // namespace detail

inline SimConfig parse_config(std::istream& in, const std::string& name = "<config>") {
  using detail::Section;
  std::vector<Section> sections;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto t = std::string(detail::trim(line));
    if (t.empty()) continue;
    const auto where = name + ":" + std::to_string(lineno);
    if (t.front() == '[') {
      if (t.back() != ']') throw ValidationError(where + ": unterminated section header");
      auto words = detail::split_words(t.substr(1, t.size() - 2));
      if (words.empty()) throw ValidationError(where + ": empty section header");
      Section s;
      s.kind = words.front();
      s.args.assign(words.begin() + 1, words.end());
      s.line = lineno;
      sections.push_back(std::move(s));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ValidationError(where + ": expected key = value");
    if (sections.empty()) throw ValidationError(where + ": setting outside of any section");
    auto key = std::string(detail::trim(t.substr(0, eq)));
    auto value = std::string(detail::trim(t.substr(eq + 1)));
    if (key.empty()) throw ValidationError(where + ": empty key");
    sections.back().entries.emplace_back(std::move(key), std::move(value));
    sections.back().entry_lines.push_back(lineno);
  }

  SimConfig cfg;
  std::set<std::string> names;
  for (const auto& s : sections) {
    const auto head = name + ":" + std::to_string(s.line);
    auto expect_args = [&](std::size_t n) {
      if (s.args.size() != n)
        throw ValidationError(head + ": section [" + s.kind + "] takes " + std::to_string(n) + " name(s)");
    };
    auto unknown = [&](std::size_t i) {
      return ValidationError(name + ":" + std::to_string(s.entry_lines[i]) + ": unknown key '" + s.entries[i].first +
                             "' in [" + s.kind + "]");
    };
    auto at = [&](std::size_t i) { return name + ":" + std::to_string(s.entry_lines[i]); };

    if (s.kind == "sim") {
      expect_args(0);
      for (std::size_t i = 0; i < s.entries.size(); ++i) {
        const auto& [k, v] = s.entries[i];
        const auto w = at(i);
        if (k == "duration") cfg.duration = detail::parse_real(v, w);
        else if (k == "t_rho") cfg.t_rho = detail::parse_real(v, w);
        else if (k == "t_p") cfg.t_p = detail::parse_real(v, w);
        else if (k == "queue_tick") cfg.queue_tick = detail::parse_real(v, w);
        else if (k == "qhat_weight") cfg.qhat_weight = detail::parse_real(v, w);
        else if (k == "kappa_q") cfg.kappa_q = detail::parse_real(v, w);
        else if (k == "gamma") cfg.gamma = detail::parse_real(v, w);
        else if (k == "transform_a") cfg.transform.a = detail::parse_real(v, w);
        else if (k == "transform_b") cfg.transform.b = detail::parse_real(v, w);
        else if (k == "warmup_fraction") cfg.warmup_fraction = detail::parse_real(v, w);
        else if (k == "training_fraction") cfg.training_fraction = detail::parse_real(v, w);
        else if (k == "max_probe_fraction") cfg.max_probe_fraction = detail::parse_real(v, w);
        else throw unknown(i);
      }
    } else if (s.kind == "nodes") {
      expect_args(0);
      for (std::size_t i = 0; i < s.entries.size(); ++i) {
        const auto& [k, v] = s.entries[i];
        NodeKind kind;
        if (k == "hosts") kind = NodeKind::Host;
        else if (k == "routers") kind = NodeKind::Router;
        else throw unknown(i);
        for (const auto& n : detail::split_words(v)) {
          if (!names.insert(n).second) throw ValidationError(at(i) + ": duplicate node '" + n + "'");
          cfg.nodes.push_back({n, kind});
        }
      }
    } else if (s.kind == "link") {
      expect_args(2);
      LinkSpec l;
      l.from = s.args[0];
      l.to = s.args[1];
      bool duplex = true;
      bool have_capacity = false;
      for (std::size_t i = 0; i < s.entries.size(); ++i) {
        const auto& [k, v] = s.entries[i];
        const auto w = at(i);
        if (k == "capacity") {
          l.capacity = detail::parse_real(v, w);
          have_capacity = true;
        } else if (k == "delay") l.delay = detail::parse_real(v, w);
        else if (k == "queue_limit") l.queue_limit = detail::parse_int(v, w);
        else if (k == "duplex") duplex = detail::parse_bool(v, w);
        else throw unknown(i);
      }
      if (!have_capacity) throw ValidationError(head + ": link needs a capacity");
      cfg.links.push_back(l);
      if (duplex) cfg.links.push_back({l.to, l.from, l.capacity, l.delay, l.queue_limit});
    } else if (s.kind == "pcn") {
      expect_args(1);
      PcnFlowSpec f;
      f.name = s.args[0];
      for (std::size_t i = 0; i < s.entries.size(); ++i) {
        const auto& [k, v] = s.entries[i];
        const auto w = at(i);
        if (k == "source") f.source = v;
        else if (k == "destination") f.destination = v;
        else if (k == "rate") f.rate = detail::parse_real(v, w);
        else if (k == "start") f.start = detail::parse_real(v, w);
        else if (k == "M") f.M = detail::parse_int(v, w);
        else if (k == "presignal") f.presignal = detail::parse_bool(v, w);
        else throw unknown(i);
      }
      cfg.pcn_flows.push_back(f);
    } else if (s.kind == "background") {
      expect_args(1);
      BackgroundFlowSpec f;
      f.name = s.args[0];
      for (std::size_t i = 0; i < s.entries.size(); ++i) {
        const auto& [k, v] = s.entries[i];
        if (k == "source") f.source = v;
        else if (k == "sink") f.sink = v;
        else if (k == "file") f.file = v;
        else if (k == "model") f.model = parse_model(v);
        else if (k == "params") f.params = parse_params(v);
        else throw unknown(i);
      }
      cfg.background.push_back(f);
    } else {
      throw ValidationError(head + ": unknown section [" + s.kind + "]");
    }
  }
  return cfg;
}

inline SimConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file '" + path + "'");
  auto cfg = parse_config(in, path);
  const auto slash = path.find_last_of('/');
  cfg.base_dir = slash == std::string::npos ? "." : path.substr(0, slash);
  return cfg;
}

/// Checks everything that does not need routing; topology checks live in the simulator.
inline void validate_settings(const SimConfig& c) {
  if (!(c.duration > 0.0)) throw ValidationError("duration must be > 0");
  LoadFactorConfig{c.kappa_q, c.gamma, 1.0, c.t_rho}.validate();
  if (!(c.t_p > 0.0) || !is_multiple_of(c.t_p, c.t_rho))
    throw ValidationError("t_p must be a positive integer multiple of t_rho");
  if (!(c.queue_tick > 0.0)) throw ValidationError("queue_tick must be > 0");
  if (!(c.qhat_weight > 0.0 && c.qhat_weight <= 1.0)) throw ValidationError("qhat_weight must lie in (0, 1]");
  if (c.warmup_fraction < 0.0 || c.training_fraction < 0.0 || c.warmup_fraction + c.training_fraction >= 1.0)
    throw ValidationError("warm-up and training fractions must be >= 0 and sum to less than 1");
  if (!(c.max_probe_fraction > 0.0)) throw ValidationError("max_probe_fraction must be > 0");
  std::set<std::string> flow_names;
  for (const auto& f : c.pcn_flows) {
    if (!flow_names.insert(f.name).second) throw ValidationError("duplicate flow name '" + f.name + "'");
    if (!(f.rate > 0.0)) throw ValidationError("pcn flow '" + f.name + "': rate must be > 0");
    if (f.start < 0.0) throw ValidationError("pcn flow '" + f.name + "': start must be >= 0");
  }
  for (const auto& f : c.background) {
    if (!flow_names.insert(f.name).second) throw ValidationError("duplicate flow name '" + f.name + "'");
    if (f.file.has_value() == f.model.has_value())
      throw ValidationError("background flow '" + f.name + "': give exactly one of file or model");
    if (f.file && !f.params.empty())
      throw ValidationError("background flow '" + f.name + "': params only apply to a model");
  }
  for (const auto& l : c.links) {
    if (!(l.capacity > 0.0)) throw ValidationError("link " + l.id() + ": capacity must be > 0");
    if (l.delay < 0.0) throw ValidationError("link " + l.id() + ": delay must be >= 0");
    if (l.queue_limit < 1) throw ValidationError("link " + l.id() + ": queue_limit must be >= 1");
  }
}

}  // namespace pcn
