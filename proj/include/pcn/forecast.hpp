#pragma once

// Time-series tooling for the source-side estimates: differencing, sample
// ACF/PACF with 95% bands, conditional-sum-of-squares fitting of an
// ARIMA(0,1,1) model and its clipped one-step-ahead forecaster.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pcn/error.hpp"
#include "pcn/loadfactor.hpp"

namespace pcn {

struct Series {
  std::vector<double> values;
  std::int64_t start_period = 0;

  Series() = default;
  explicit Series(std::vector<double> v, std::int64_t start = 0) : values(std::move(v)), start_period(start) {
    validate();
  }

  std::size_t size() const { return values.size(); }

  void validate() const {
    if (values.empty()) throw ValidationError("series must contain at least one value");
    for (double v : values)
      if (!std::isfinite(v)) throw ValidationError("series contains a non-finite value");
  }
};

inline Series difference(const Series& s, int d) {
  if (d < 0) throw ValidationError("difference order must be >= 0");
  if (s.size() <= static_cast<std::size_t>(d))
    throw ValidationError("series too short for difference order " + std::to_string(d));
  std::vector<double> v = s.values;
  for (int k = 0; k < d; ++k) {
    for (std::size_t i = 0; i + 1 < v.size(); ++i) v[i] = v[i + 1] - v[i];
    v.pop_back();
  }
  return Series(std::move(v), s.start_period + d);
}

struct AcfResult {
  std::vector<double> values;  // index = lag, 0..max_lag
  double band = 0.0;           // 1.96 / sqrt(n)

  int max_lag() const { return static_cast<int>(values.size()) - 1; }
  bool significant(int lag) const { return std::abs(values.at(static_cast<std::size_t>(lag))) > band; }
};

namespace detail {

inline void check_acf_args(const Series& s, int max_lag) {
  if (max_lag < 0) throw ValidationError("max lag must be >= 0");
  if (static_cast<std::size_t>(max_lag) >= s.size())
    throw ValidationError("max lag must be smaller than the series length");
}

}  // namespace detail

/// Sample autocorrelation with divisor n about the overall mean.
inline AcfResult acf(const Series& s, int max_lag) {
  detail::check_acf_args(s, max_lag);
  const auto n = s.size();
  double mean = 0.0;
  for (double v : s.values) mean += v;
  mean /= static_cast<double>(n);

  std::vector<double> c(static_cast<std::size_t>(max_lag) + 1, 0.0);
  for (std::size_t k = 0; k < c.size(); ++k) {
    double acc = 0.0;
    for (std::size_t t = 0; t + k < n; ++t) acc += (s.values[t] - mean) * (s.values[t + k] - mean);
    c[k] = acc / static_cast<double>(n);
  }
  // Relative threshold so rounding noise on a constant series still counts as degenerate.
  const double scale = std::max(1.0, std::abs(mean));
  if (!(c[0] > 1e-24 * scale * scale)) throw DegenerateInputError("series has zero variance");

  AcfResult r;
  r.band = 1.96 / std::sqrt(static_cast<double>(n));
  r.values.resize(c.size());
  for (std::size_t k = 0; k < c.size(); ++k) r.values[k] = c[k] / c[0];
  return r;
}

/// Partial autocorrelation via the Durbin-Levinson recursion on the sample ACF.
/// values[0] is 1 by convention.
inline AcfResult pacf(const Series& s, int max_lag) {
  const AcfResult a = acf(s, max_lag);
  const auto& r = a.values;
  AcfResult out;
  out.band = a.band;
  out.values.assign(r.size(), 0.0);
  out.values[0] = 1.0;
  if (max_lag == 0) return out;

  std::vector<double> phi(r.size(), 0.0), prev(r.size(), 0.0);
  phi[1] = r[1];
  out.values[1] = r[1];
  double v = 1.0 - r[1] * r[1];
  for (int k = 2; k <= max_lag; ++k) {
    prev = phi;
    double num = r[static_cast<std::size_t>(k)];
    for (int j = 1; j < k; ++j) num -= prev[static_cast<std::size_t>(j)] * r[static_cast<std::size_t>(k - j)];
    const double pk = v > 0.0 ? num / v : 0.0;
    phi[static_cast<std::size_t>(k)] = pk;
    for (int j = 1; j < k; ++j)
      phi[static_cast<std::size_t>(j)] = prev[static_cast<std::size_t>(j)] - pk * prev[static_cast<std::size_t>(k - j)];
    v *= (1.0 - pk * pk);
    out.values[static_cast<std::size_t>(k)] = pk;
  }
  return out;
}

/// Two-column (lag, value) CSV plus the band column.
inline void write_acf_csv(std::ostream& os, const AcfResult& r) {
  os << "lag,value,band\n";
  for (std::size_t k = 0; k < r.values.size(); ++k) os << k << ',' << r.values[k] << ',' << r.band << '\n';
}

inline constexpr std::size_t kMinTrainingLength = 20;
inline constexpr double kThetaBound = 0.99;

/// Conditional sum of squares of the one-step residuals of an MA(1) on the
/// first differences, with the pre-sample residual set to zero.
inline double css_ima11(std::span<const double> x, double theta) {
  double eps = 0.0;
  double sum = 0.0;
  for (std::size_t t = 1; t < x.size(); ++t) {
    eps = (x[t] - x[t - 1]) - theta * eps;
    sum += eps * eps;
  }
  return sum;
}

/// Least-CSS theta for ARIMA(0,1,1): grid over (-0.99, 0.99) in steps of 0.01,
/// then golden-section refinement around the best grid point.
inline double fit_arima011(const Series& training) {
  training.validate();
  if (training.size() < kMinTrainingLength)
    throw ValidationError("ARIMA(0,1,1) fitting needs at least " + std::to_string(kMinTrainingLength) +
                          " training periods, got " + std::to_string(training.size()));
  const auto& x = training.values;
  const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  if (*lo_it == *hi_it) return 0.0;

  // Visit 0, +-0.01, +-0.02, ... so exact ties resolve toward theta = 0.
  double best_theta = 0.0;
  double best = css_ima11(x, 0.0);
  for (int k = 1; k <= 99; ++k) {
    for (int sign : {-1, 1}) {
      const double th = sign * k * 0.01;
      const double v = css_ima11(x, th);
      if (v < best) {
        best = v;
        best_theta = th;
      }
    }
  }

  double a = std::max(-kThetaBound, best_theta - 0.01);
  double b = std::min(kThetaBound, best_theta + 0.01);
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = css_ima11(x, c), fd = css_ima11(x, d);
  for (int it = 0; it < 60; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = css_ima11(x, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = css_ima11(x, d);
    }
  }
  const double refined = 0.5 * (a + b);
  if (css_ima11(x, refined) < best) best_theta = refined;
  return best_theta;
}

/// One-step-ahead ARIMA(0,1,1) predictor for a single router.
struct ForecastState {
  double theta = 0.0;
  double last_forecast = 0.0;  // unclipped; the recursion runs on raw values
  double last_residual = 0.0;
  bool initialized = false;

  explicit ForecastState(double th = 0.0) : theta(th) {
    if (!(std::abs(th) < 1.0)) throw ValidationError("MA(1) coefficient must satisfy |theta| < 1");
  }
};

/// Feeds the observation for the period just closed and returns the
/// prediction for the next period, clipped to [0,100].
inline double forecast_next(ForecastState& st, double observation) {
  if (!std::isfinite(observation)) throw ValidationError("observation must be finite");
  if (!st.initialized) {
    st.initialized = true;
    st.last_residual = 0.0;
    st.last_forecast = observation;
    return clip_percent(observation);
  }
  st.last_residual = observation - st.last_forecast;
  st.last_forecast = observation + st.theta * st.last_residual;
  return clip_percent(st.last_forecast);
}

/// Runs the forecaster over a per-period estimate series. Element l of the
/// result predicts period l+1; it is empty while no observation has arrived.
inline std::vector<std::optional<double>> forecast_series(std::span<const std::optional<double>> e, double theta) {
  ForecastState st(theta);
  std::vector<std::optional<double>> out(e.size());
  for (std::size_t l = 0; l < e.size(); ++l)
    if (e[l]) out[l] = forecast_next(st, *e[l]);
  return out;
}

}  // namespace pcn
