#pragma once

// Post-processing of a run: split into warm-up / training / evaluation,
// per-period ground truth, and RMSE and bias of the raw and corrected
// one-step predictors over a sweep of estimation periods.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pcn/config.hpp"
#include "pcn/error.hpp"
#include "pcn/forecast.hpp"
#include "pcn/protocol.hpp"
#include "pcn/sim.hpp"
#include "pcn/trace.hpp"

namespace pcn {

inline const std::vector<double>& default_tp_sweep() {
  static const std::vector<double> v{0.2, 0.4, 0.8, 1.6, 3.2};
  return v;
}

inline constexpr std::size_t kMinEvaluationPeriods = 10;

struct EvalSplit {
  double warmup_fraction = 0.10;
  double training_fraction = 0.10;

  void validate() const {
    if (warmup_fraction < 0.0 || training_fraction < 0.0 || warmup_fraction + training_fraction >= 1.0)
      throw ValidationError("split fractions must be >= 0 and sum to less than 1");
  }
};

/// Mean load factor over one estimation period.
inline double ground_truth_L(std::span<const double> rho_samples) {
  if (rho_samples.empty()) throw ValidationError("period contains no load-factor samples");
  double s = 0.0;
  for (double r : rho_samples) s += r;
  return s / static_cast<double>(rho_samples.size());
}

namespace detail {
inline void check_paired(std::span<const double> a, std::span<const double> p) {
  if (a.size() != p.size()) throw ValidationError("actual and predicted series differ in length");
  if (a.empty()) throw ValidationError("need at least one prediction");
}
}  // namespace detail

inline double rmse(std::span<const double> actual, std::span<const double> predicted) {
  detail::check_paired(actual, predicted);
  double s = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) s += (actual[i] - predicted[i]) * (actual[i] - predicted[i]);
  return std::sqrt(s / static_cast<double>(actual.size()));
}

/// Mean of (actual - predicted); positive when the predictor underestimates.
inline double bias(std::span<const double> actual, std::span<const double> predicted) {
  detail::check_paired(actual, predicted);
  double s = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) s += actual[i] - predicted[i];
  return s / static_cast<double>(actual.size());
}

enum class Estimator { Raw, Corrected };

inline const char* to_string(Estimator e) { return e == Estimator::Raw ? "raw" : "corrected"; }

struct EvalCell {
  double t_p = 0.0;
  std::string direction;  // PCN source name
  int router = 0;
  Estimator estimator = Estimator::Raw;
  std::optional<double> rmse;  // empty: insufficient data
  std::optional<double> bias;
  std::size_t n = 0;
  double theta = 0.0;  // coefficient used by this estimator
};

struct EvalReport {
  std::vector<EvalCell> cells;

  const EvalCell* find(double t_p, const std::string& dir, int router, Estimator est) const {
    for (const auto& c : cells)
      if (std::abs(c.t_p - t_p) < 1e-9 && c.direction == dir && c.router == router && c.estimator == est) return &c;
    return nullptr;
  }
};

/// Period layout for one t_P. Periods start at the end of the warm-up,
/// which is rounded down to a whole t_rho window.
struct PeriodPlan {
  double t_p = 0.0;
  std::int64_t windows_per_period = 0;
  std::int64_t first_window = 0;
  double start = 0.0;
  std::int64_t periods = 0;
  std::int64_t training = 0;

  std::int64_t evaluation() const { return periods - training; }
};

inline PeriodPlan plan_periods(const RunInfo& info, double t_p, const EvalSplit& split) {
  split.validate();
  if (!(t_p > 0.0) || !is_multiple_of(t_p, info.t_rho))
    throw ValidationError("t_p " + detail::format_double(t_p) + " is not a positive multiple of t_rho " +
                          detail::format_double(info.t_rho));
  PeriodPlan p;
  p.t_p = t_p;
  p.windows_per_period = std::llround(t_p / info.t_rho);
  const auto n_windows = static_cast<std::int64_t>(std::floor(info.duration / info.t_rho + 1e-9));
  p.first_window = static_cast<std::int64_t>(std::floor(info.duration * split.warmup_fraction / info.t_rho + 1e-9));
  p.start = static_cast<double>(p.first_window) * info.t_rho;
  p.periods = std::max<std::int64_t>(0, (n_windows - p.first_window) / p.windows_per_period);
  p.training = std::min<std::int64_t>(
      p.periods, static_cast<std::int64_t>(std::floor(info.duration * split.training_fraction / t_p + 1e-9)));
  return p;
}

/// Replays a source's ACK log through period closing. Result is [period][router-1].
inline std::vector<std::vector<std::optional<double>>> replay_estimates(std::span<const AckRecord> acks,
                                                                        const FlowInfo& flow, const PeriodPlan& plan) {
  ProtocolParams params{flow.M, flow.presignal, flow.hop_count};
  TallyTable table(params, flow.hop_count);
  std::vector<std::vector<std::optional<double>>> e;
  e.reserve(static_cast<std::size_t>(plan.periods));
  const double end = plan.start + static_cast<double>(plan.periods) * plan.t_p;
  for (const auto& a : acks) {
    if (a.source != flow.name || a.time < plan.start || a.time >= end) continue;
    const auto period = std::min<std::int64_t>(
        plan.periods - 1, static_cast<std::int64_t>(std::floor((a.time - plan.start) / plan.t_p)));
    while (static_cast<std::int64_t>(e.size()) < period) e.push_back(table.close_period());
    PacketHeader ack;
    ack.is_ack = true;
    ack.ipid = a.ipid;
    ack.echo_of = a.ipid;
    ack.ecn = a.ecn;
    table.on_ack(ack);
  }
  while (static_cast<std::int64_t>(e.size()) < plan.periods) e.push_back(table.close_period());
  return e;
}

/// Mean rho per period for one link; empty where a window is missing.
inline std::vector<std::optional<double>> ground_truth_series(const std::map<std::int64_t, double>& rho_by_window,
                                                              const PeriodPlan& plan) {
  std::vector<std::optional<double>> L(static_cast<std::size_t>(plan.periods));
  std::vector<double> buf;
  for (std::int64_t l = 0; l < plan.periods; ++l) {
    buf.clear();
    for (std::int64_t k = 0; k < plan.windows_per_period; ++k) {
      const auto it = rho_by_window.find(plan.first_window + l * plan.windows_per_period + k);
      if (it == rho_by_window.end()) break;
      buf.push_back(it->second);
    }
    if (static_cast<std::int64_t>(buf.size()) == plan.windows_per_period) L[static_cast<std::size_t>(l)] = ground_truth_L(buf);
  }
  return L;
}

struct EvalOptions {
  EvalSplit split;
  // Forces the corrected estimator's coefficient instead of fitting it.
  std::optional<double> theta_override;
};

inline EvalOptions default_eval_options(const RunInfo& info) {
  EvalOptions o;
  o.split = {info.warmup_fraction, info.training_fraction};
  return o;
}

/// Scores the raw (theta = 0) and corrected predictors for every t_P, source and router.
inline EvalReport evaluate(const RunArtifacts& art, std::span<const double> t_ps, const EvalOptions& opt) {
  const auto& info = art.info;
  std::map<std::string, std::map<std::int64_t, double>> rho;
  for (const auto& g : art.ground_truth) rho[g.link][std::llround(g.time / info.t_rho)] = g.rho;

  EvalReport report;
  for (double t_p : t_ps) {
    const auto plan = plan_periods(info, t_p, opt.split);
    for (const auto& flow : info.flows) {
      const auto e_all = replay_estimates(art.acks, flow, plan);
      for (int r = 1; r <= flow.hop_count; ++r) {
        const auto& link = flow.router_links.at(static_cast<std::size_t>(r - 1));
        const auto rho_it = rho.find(link);
        const auto L = rho_it == rho.end() ? std::vector<std::optional<double>>(e_all.size())
                                           : ground_truth_series(rho_it->second, plan);
        std::vector<std::optional<double>> e(e_all.size());
        for (std::size_t l = 0; l < e_all.size(); ++l) e[l] = e_all[l][static_cast<std::size_t>(r - 1)];

        std::vector<double> training;
        for (std::int64_t l = 0; l < plan.training; ++l)
          if (e[static_cast<std::size_t>(l)]) training.push_back(*e[static_cast<std::size_t>(l)]);
        std::optional<double> theta;
        if (opt.theta_override) theta = *opt.theta_override;
        else if (training.size() >= kMinTrainingLength) theta = fit_arima011(Series(training));

        const bool enough_eval = plan.evaluation() >= static_cast<std::int64_t>(kMinEvaluationPeriods);
        for (Estimator est : {Estimator::Raw, Estimator::Corrected}) {
          EvalCell cell{t_p, flow.name, r, est, std::nullopt, std::nullopt, 0, 0.0};
          const std::optional<double> th = est == Estimator::Raw ? std::optional<double>(0.0) : theta;
          if (enough_eval && th) {
            cell.theta = *th;
            const auto pred = forecast_series(e, *th);
            std::vector<double> actual, predicted;
            // Prediction made at the end of period l targets period l + 1.
            for (std::int64_t target = std::max<std::int64_t>(plan.training, 1); target < plan.periods; ++target) {
              const auto& p = pred[static_cast<std::size_t>(target - 1)];
              const auto& a = L[static_cast<std::size_t>(target)];
              if (!p || !a) continue;
              actual.push_back(*a);
              predicted.push_back(*p);
            }
            if (!actual.empty()) {
              cell.rmse = pcn::rmse(actual, predicted);
              cell.bias = pcn::bias(actual, predicted);
              cell.n = actual.size();
            }
          }
          report.cells.push_back(cell);
        }
      }
    }
  }
  return report;
}

inline EvalReport evaluate(const RunArtifacts& art, std::span<const double> t_ps) {
  return evaluate(art, t_ps, default_eval_options(art.info));
}

/// Runs the simulation once and scores every t_P against that single run.
inline EvalReport sweep(const SimConfig& cfg, std::span<const double> t_ps) {
  return evaluate(run(cfg), t_ps);
}

inline void write_eval_csv(std::ostream& os, const EvalReport& r) {
  os << "t_p_seconds,direction,router_index,estimator,rmse,bias,n_periods\n";
  for (const auto& c : r.cells) {
    os << detail::format_double(c.t_p) << ',' << c.direction << ',' << c.router << ',' << to_string(c.estimator) << ','
       << (c.rmse ? detail::format_double(*c.rmse) : "NA") << ',' << (c.bias ? detail::format_double(*c.bias) : "NA")
       << ',' << c.n << '\n';
  }
}

}  // namespace pcn
