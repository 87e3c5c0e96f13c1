#pragma once

#include <algorithm>
#include <cstdint>

#include "pcn/error.hpp"

namespace pcn {

struct LoadWindowStats {
  double lambda = 0.0;  // packets offered to the link during the window
  double qhat = 0.0;    // persistent (low-pass filtered) queue length, packets
  std::int64_t window_index = 0;
};

struct LoadFactorConfig {
  double kappa_q = 0.5;
  double gamma = 0.98;
  double capacity = 1.0;  // packets per second
  double t_rho = 0.2;     // seconds

  void validate() const {
    if (!(kappa_q > 0.0)) throw ValidationError("kappa_q must be > 0");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ValidationError("gamma must lie in (0, 1]");
    if (!(capacity > 0.0)) throw ValidationError("link capacity must be > 0");
    if (!(t_rho > 0.0)) throw ValidationError("t_rho must be > 0");
  }
};

struct LoadFactorSample {
  double rho = 0.0;      // percentage, clipped to [0, 100]
  std::int64_t window_index = 0;
  double raw_rho = 0.0;  // before clipping
};

inline double clip_percent(double v) { return std::clamp(v, 0.0, 100.0); }

inline LoadFactorSample compute_load_factor(const LoadWindowStats& stats, const LoadFactorConfig& cfg) {
  const double raw =
      100.0 * (stats.lambda + cfg.kappa_q * stats.qhat) / (cfg.gamma * cfg.capacity * cfg.t_rho);
  return {clip_percent(raw), stats.window_index, raw};
}

/// One EWMA step of the persistent-queue filter.
inline double update_persistent_queue(double qhat_prev, double queue_len, double weight) {
  if (!(weight > 0.0 && weight <= 1.0)) throw ValidationError("smoothing weight must lie in (0, 1]");
  return (1.0 - weight) * qhat_prev + weight * queue_len;
}

/// a*rho + b mapping applied before the load is used as a marking probability.
struct AffineTransform {
  double a = 1.0;
  double b = 0.0;

  double operator()(double rho) const { return clip_percent(a * rho + b); }
  bool is_identity() const { return a == 1.0 && b == 0.0; }
};

/// Router-side per-link load tracker over fixed t_rho windows.
class LoadFactorMeter {
 public:
  LoadFactorMeter(LoadFactorConfig cfg, double qhat_weight) : cfg_(cfg), weight_(qhat_weight) {
    cfg_.validate();
    if (!(weight_ > 0.0 && weight_ <= 1.0)) throw ValidationError("smoothing weight must lie in (0, 1]");
  }

  void on_arrival() { lambda_ += 1.0; }

  void on_queue_sample(double queue_len) {
    qhat_ = update_persistent_queue(qhat_, queue_len, weight_);
  }

  /// Closes the current window and starts the next one.
  LoadFactorSample close_window() {
    const auto s = compute_load_factor({lambda_, qhat_, window_}, cfg_);
    current_ = s.rho;
    lambda_ = 0.0;
    ++window_;
    return s;
  }

  /// Load factor of the most recently closed window (0 before the first).
  double current() const { return current_; }
  double qhat() const { return qhat_; }
  const LoadFactorConfig& config() const { return cfg_; }

 private:
  LoadFactorConfig cfg_;
  double weight_;
  double lambda_ = 0.0;
  double qhat_ = 0.0;
  double current_ = 0.0;
  std::int64_t window_ = 0;
};

}  // namespace pcn
