#pragma once

// Open-loop background traffic: the text trace format and the synthetic
// generators that stand in for recorded traces.
//
// Trace format: one packet per line, "arrival_time_seconds size_bytes",
// whitespace separated. Blank lines and lines starting with '#' are ignored.
// Arrival times must be nondecreasing; they are shifted on load so that the
// first packet arrives at t = 0.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pcn/error.hpp"
#include "pcn/rng.hpp"

namespace pcn {

struct TraceRecord {
  double time = 0.0;
  std::uint32_t size = 0;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

struct TraceFlow {
  std::string source;
  std::string sink;
  std::vector<TraceRecord> packets;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && p == end;
}

/// Shortest round-trip representation of a double.
inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace detail

inline std::vector<TraceRecord> parse_trace(std::istream& in, const std::string& name = "<trace>") {
  std::vector<TraceRecord> out;
  std::string line;
  std::size_t lineno = 0;
  double prev = -std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    std::istringstream fields{std::string(t)};
    std::string ts, ss, extra;
    fields >> ts >> ss;
    const auto where = name + ":" + std::to_string(lineno) + ": ";
    if (ss.empty() || (fields >> extra))
      throw ValidationError(where + "expected \"arrival_time_seconds size_bytes\"");
    double time = 0.0;
    std::uint64_t size = 0;
    if (!detail::parse_number(ts, time) || !std::isfinite(time))
      throw ValidationError(where + "bad arrival time '" + ts + "'");
    if (!detail::parse_number(ss, size) || size == 0 || size > std::numeric_limits<std::uint32_t>::max())
      throw ValidationError(where + "bad packet size '" + ss + "'");
    if (time < prev)
      throw ValidationError(where + "arrival times must be nondecreasing (" + ts + " after " +
                            detail::format_double(prev) + ")");
    prev = time;
    out.push_back({time, static_cast<std::uint32_t>(size)});
  }
  if (out.empty()) throw ValidationError(name + ": trace contains no packets");
  const double t0 = out.front().time;
  for (auto& r : out) r.time -= t0;
  return out;
}

inline TraceFlow load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open trace file '" + path + "'");
  TraceFlow f;
  f.packets = parse_trace(in, path);
  return f;
}

inline void write_trace(std::ostream& os, const std::vector<TraceRecord>& packets) {
  os << "# arrival_time_seconds size_bytes\n";
  for (const auto& r : packets) os << detail::format_double(r.time) << ' ' << r.size << '\n';
}

/// Parses "key=value,key=value" into numbers.
inline std::map<std::string, double> parse_params(std::string_view text) {
  std::map<std::string, double> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto item = detail::trim(text.substr(0, comma));
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw ValidationError("parameter '" + std::string(item) + "' is not key=value");
    const auto key = std::string(detail::trim(item.substr(0, eq)));
    double v = 0.0;
    if (key.empty() || !detail::parse_number(item.substr(eq + 1), v) || !std::isfinite(v))
      throw ValidationError("bad value in parameter '" + std::string(item) + "'");
    out[key] = v;
  }
  return out;
}

enum class TrafficModel { Poisson, OnOffMmpp };

inline TrafficModel parse_model(std::string_view name) {
  if (name == "poisson") return TrafficModel::Poisson;
  if (name == "onoff-mmpp") return TrafficModel::OnOffMmpp;
  throw ValidationError("unknown traffic model '" + std::string(name) + "' (expected poisson or onoff-mmpp)");
}

/// poisson: rate [, size]
/// onoff-mmpp: on_rate, off_rate, mean_on, mean_off [, size, start_on]
/// Rates are packets per second, dwell means are seconds.
struct GeneratorParams {
  TrafficModel model = TrafficModel::Poisson;
  double on_rate = 0.0;
  double off_rate = 0.0;
  double mean_on = 0.0;
  double mean_off = 0.0;
  std::uint32_t size = 1000;
  bool start_on = true;

  static GeneratorParams from(TrafficModel model, const std::map<std::string, double>& kv) {
    GeneratorParams p;
    p.model = model;
    auto need = [&](const char* k) {
      const auto it = kv.find(k);
      if (it == kv.end()) throw ValidationError(std::string("missing generator parameter '") + k + "'");
      return it->second;
    };
    auto opt = [&](const char* k, double dflt) {
      const auto it = kv.find(k);
      return it == kv.end() ? dflt : it->second;
    };
    std::vector<std::string> known{"size"};
    if (model == TrafficModel::Poisson) {
      p.on_rate = need("rate");
      known.push_back("rate");
      if (!(p.on_rate > 0.0)) throw ValidationError("poisson rate must be > 0");
    } else {
      p.on_rate = need("on_rate");
      p.off_rate = need("off_rate");
      p.mean_on = need("mean_on");
      p.mean_off = need("mean_off");
      p.start_on = opt("start_on", 1.0) != 0.0;
      known.insert(known.end(), {"on_rate", "off_rate", "mean_on", "mean_off", "start_on"});
      if (!(p.on_rate >= 0.0 && p.off_rate >= 0.0) || !(p.on_rate + p.off_rate > 0.0))
        throw ValidationError("on/off rates must be >= 0 and not both zero");
      if (!(p.mean_on > 0.0 && p.mean_off > 0.0)) throw ValidationError("mean dwell times must be > 0");
    }
    const double size = opt("size", 1000.0);
    if (!(size >= 1.0 && size <= 65535.0) || size != std::floor(size))
      throw ValidationError("packet size must be an integer in 1..65535");
    p.size = static_cast<std::uint32_t>(size);
    for (const auto& [k, v] : kv)
      if (std::find(known.begin(), known.end(), k) == known.end())
        throw ValidationError("unknown generator parameter '" + k + "'");
    return p;
  }
};

/// Incremental generator; arrivals are emitted on demand so a long run never
/// holds the whole trace in memory. Times are shifted so the first packet is
/// at t = 0, matching what load_trace produces for the written file.
class SyntheticTrace {
 public:
  SyntheticTrace(GeneratorParams p, double duration, std::uint64_t seed)
      : p_(p), duration_(duration), rng_(seed), on_(p.start_on) {
    if (!(duration > 0.0)) throw ValidationError("trace duration must be > 0");
    if (p_.model == TrafficModel::OnOffMmpp) state_end_ = rng_.exponential(1.0 / (on_ ? p_.mean_on : p_.mean_off));
    else state_end_ = std::numeric_limits<double>::infinity();
  }

  std::optional<TraceRecord> next() {
    while (true) {
      const double rate = on_ ? p_.on_rate : p_.off_rate;
      double cand = rate > 0.0 ? clock_ + rng_.exponential(rate) : std::numeric_limits<double>::infinity();
      if (cand >= state_end_) {
        // Memoryless: restart the arrival clock at the state boundary.
        clock_ = state_end_;
        if (clock_ >= duration_) return std::nullopt;
        on_ = !on_;
        state_end_ = clock_ + rng_.exponential(1.0 / (on_ ? p_.mean_on : p_.mean_off));
        continue;
      }
      if (cand >= duration_) return std::nullopt;
      clock_ = cand;
      if (!t0_) t0_ = cand;
      return TraceRecord{cand - *t0_, p_.size};
    }
  }

 private:
  GeneratorParams p_;
  double duration_;
  Rng rng_;
  bool on_;
  double clock_ = 0.0;
  double state_end_ = 0.0;
  std::optional<double> t0_;
};

inline TraceFlow gen_synthetic_trace(TrafficModel model, const std::map<std::string, double>& params,
                                     double duration, std::uint64_t seed) {
  SyntheticTrace gen(GeneratorParams::from(model, params), duration, seed);
  TraceFlow f;
  while (auto r = gen.next()) f.packets.push_back(*r);
  return f;
}

}  // namespace pcn
