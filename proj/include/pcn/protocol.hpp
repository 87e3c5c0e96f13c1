#pragma once

// One-bit probabilistic congestion notification: header arithmetic, the
// stateless router marking rule, the receiver echo and the source-side
// attribution and tallying that turns echoed bits into per-router estimates.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pcn/error.hpp"
#include "pcn/rng.hpp"

namespace pcn {

inline constexpr int kDefaultRouterSlots = 32;

struct PacketHeader {
  std::uint16_t ipid = 0;
  std::uint8_t ttl = 0;
  bool ecn = false;
  bool is_ack = false;
  // For ACKs: the ipid of the data packet being acknowledged.
  std::optional<std::uint16_t> echo_of;

  friend bool operator==(const PacketHeader&, const PacketHeader&) = default;
};

struct ProtocolParams {
  int M = kDefaultRouterSlots;
  bool presignal = false;
  std::optional<int> hop_count;

  void validate() const {
    if (M < 1) throw ValidationError("router slot modulus M must be >= 1");
    if (M > 255) throw ValidationError("router slot modulus M must fit in the 8-bit TTL");
    if (presignal) {
      if (!hop_count) throw ValidationError("pre-signalling requires a known hop count");
      if (*hop_count < 1 || *hop_count > M)
        throw ValidationError("pre-signalled hop count must lie in 1..M");
    }
    if (hop_count && *hop_count < 1) throw ValidationError("hop count must be >= 1");
  }
};

/// Eq.-2 style condition: the router seeing `ttl` may mark a packet with `ipid`.
constexpr bool is_markable(int ttl, int ipid, int M) noexcept {
  return (ttl % M) == (ipid % M);
}

/// TTL on arrival at the i-th router (1-based) of a path whose source emitted TTL = M.
constexpr int arrival_ttl(int router_index, int M) noexcept { return M - (router_index - 1); }

/// ipid residue markable by router i, i.e. the residue of its arrival TTL.
constexpr int residue_for_router(int router_index, int M) noexcept {
  const int r = arrival_ttl(router_index, M) % M;
  return r < 0 ? r + M : r;
}

struct Attribution {
  int router = 0;
  // Set when the path is longer than M and several routers share the residue.
  bool ambiguous = false;
};

/// Router on an h-hop path for which this ipid was markable, if any.
inline std::optional<Attribution> attribute_router(int ipid, int M, int hop_count) {
  std::optional<Attribution> found;
  for (int i = 1; i <= hop_count; ++i) {
    if (!is_markable(arrival_ttl(i, M), ipid, M)) continue;
    if (found) {
      found->ambiguous = true;
      break;
    }
    found = Attribution{i, false};
    if (hop_count <= M) break;
  }
  return found;
}

/// Per-source header generator.
class PcnSource {
 public:
  explicit PcnSource(ProtocolParams params, std::uint16_t initial_ipid = 0)
      : params_(std::move(params)), prev_ipid_(initial_ipid) {
    params_.validate();
    if (params_.presignal) {
      for (int i = 1; i <= *params_.hop_count; ++i)
        presignal_residues_.push_back(residue_for_router(i, params_.M));
    }
  }

  const ProtocolParams& params() const { return params_; }
  std::uint16_t previous_ipid() const { return prev_ipid_; }

  PacketHeader next_data_header() {
    PacketHeader h;
    h.ttl = static_cast<std::uint8_t>(params_.M);
    if (presignal_residues_.empty()) {
      h.ipid = static_cast<std::uint16_t>(prev_ipid_ + 1U);
    } else {
      // Cycle through the markable residues; the block counter keeps ipids
      // distinct within a 2^16 window.
      const auto residue = static_cast<unsigned>(presignal_residues_[cursor_]);
      h.ipid = static_cast<std::uint16_t>(block_ * static_cast<unsigned>(params_.M) + residue);
      if (++cursor_ == presignal_residues_.size()) {
        cursor_ = 0;
        ++block_;
      }
    }
    prev_ipid_ = h.ipid;
    return h;
  }

 private:
  ProtocolParams params_;
  std::uint16_t prev_ipid_;
  std::vector<int> presignal_residues_;
  std::size_t cursor_ = 0;
  unsigned block_ = 0;
};

/// Router marking step. `load_factor` is a percentage already clipped to [0,100].
/// The caller decrements TTL after this check. ACKs pass through untouched.
inline PacketHeader router_mark(PacketHeader header, double load_factor, int M, Rng& rng) {
  if (header.is_ack) return header;
  if (is_markable(header.ttl, header.ipid, M) && rng.uniform() < load_factor / 100.0)
    header.ecn = true;
  return header;
}

/// Receiver echo: exactly one ACK per delivered data packet.
inline PacketHeader make_ack(const PacketHeader& data) {
  PacketHeader ack;
  ack.ipid = data.ipid;
  ack.ttl = data.ttl;
  ack.ecn = data.ecn;
  ack.is_ack = true;
  ack.echo_of = data.ipid;
  return ack;
}

struct RouterTally {
  int router_index = 0;
  std::uint64_t markable_acks = 0;
  std::uint64_t marked_acks = 0;
  std::int64_t period_index = 0;
};

/// Source-side tallies for one estimation period, one entry per path router,
/// plus the carried-forward estimates from earlier periods.
class TallyTable {
 public:
  TallyTable(ProtocolParams params, int hop_count)
      : params_(std::move(params)), hop_count_(hop_count) {
    if (hop_count < 1) throw ValidationError("hop count must be >= 1");
    for (int i = 1; i <= hop_count; ++i) tallies_.push_back({i, 0, 0, 0});
    previous_.assign(static_cast<std::size_t>(hop_count), std::nullopt);
  }

  int hop_count() const { return hop_count_; }
  std::int64_t period_index() const { return period_; }
  const std::vector<RouterTally>& tallies() const { return tallies_; }
  const RouterTally& tally(int router_index) const {
    return tallies_.at(static_cast<std::size_t>(router_index - 1));
  }

  /// Returns the router the ACK was attributed to, if any.
  std::optional<int> on_ack(const PacketHeader& ack) {
    const int ipid = ack.echo_of ? *ack.echo_of : ack.ipid;
    const auto who = attribute_router(ipid, params_.M, hop_count_);
    if (!who) return std::nullopt;
    auto& t = tallies_[static_cast<std::size_t>(who->router - 1)];
    ++t.markable_acks;
    if (ack.ecn) ++t.marked_acks;
    return who->router;
  }

  /// e per router on the percentage scale. Routers without samples repeat
  /// their previous estimate; before their first sample they are missing.
  std::vector<std::optional<double>> close_period() {
    std::vector<std::optional<double>> e(tallies_.size());
    for (std::size_t k = 0; k < tallies_.size(); ++k) {
      auto& t = tallies_[k];
      if (t.markable_acks > 0) {
        e[k] = 100.0 * static_cast<double>(t.marked_acks) / static_cast<double>(t.markable_acks);
        previous_[k] = e[k];
      } else {
        e[k] = previous_[k];
      }
      t.markable_acks = 0;
      t.marked_acks = 0;
      t.period_index = period_ + 1;
    }
    ++period_;
    return e;
  }

 private:
  ProtocolParams params_;
  int hop_count_;
  std::int64_t period_ = 0;
  std::vector<RouterTally> tallies_;
  std::vector<std::optional<double>> previous_;
};

}  // namespace pcn
