#pragma once

// Deterministic discrete-event simulator: FIFO drop-tail links with
// packet-granularity service, open-loop background replay, fixed-rate PCN
// probe flows with one ACK per packet, and per-router load-factor windows.

#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "pcn/config.hpp"
#include "pcn/error.hpp"
#include "pcn/forecast.hpp"
#include "pcn/loadfactor.hpp"
#include "pcn/protocol.hpp"
#include "pcn/rng.hpp"
#include "pcn/trace.hpp"

namespace pcn {

// ---------------------------------------------------------------------------
// Run outputs

struct GroundTruthRow {
  double time = 0.0;  // window start; the sample covers [time, time + t_rho)
  std::string link;
  double rho = 0.0;
};

/// Estimate for one period of one PCN source. l_hat predicts the next period.
struct EstimateRow {
  double period_end = 0.0;
  std::string source;
  int router = 0;
  std::optional<double> e_raw;
  std::optional<double> l_hat;
};

struct AckRecord {
  double time = 0.0;       // ACK arrival at the source
  std::string source;
  std::uint16_t ipid = 0;
  bool ecn = false;
  double sent_time = 0.0;  // emission time of the acknowledged data packet
};

struct LinkAccounting {
  std::string link;
  std::uint64_t enqueued = 0;  // every packet offered to the link
  std::uint64_t dequeued = 0;
  std::uint64_t dropped = 0;
  std::uint64_t queued = 0;    // still in the queue when the run ended

  bool conserved() const { return enqueued == dequeued + dropped + queued; }
};

struct FlowInfo {
  std::string name;
  int M = kDefaultRouterSlots;
  bool presignal = false;
  int hop_count = 0;
  double start = 0.0;
  std::vector<std::string> router_links;  // outgoing link of the i-th router on the path
};

/// What post-processing needs to know about a run.
struct RunInfo {
  double duration = 0.0;
  double t_rho = 0.2;
  double t_p = 0.2;
  double warmup_fraction = 0.1;
  double training_fraction = 0.1;
  std::uint64_t seed = 0;
  std::vector<FlowInfo> flows;
  std::vector<std::string> monitored_links;

  const FlowInfo& flow(const std::string& name) const {
    for (const auto& f : flows)
      if (f.name == name) return f;
    throw ValidationError("unknown PCN flow '" + name + "'");
  }
};

struct RunArtifacts {
  RunInfo info;
  std::vector<GroundTruthRow> ground_truth;
  std::vector<EstimateRow> estimates;
  std::vector<AckRecord> acks;
  std::vector<LinkAccounting> accounting;
};

// ---------------------------------------------------------------------------
// Topology

class Topology {
 public:
  explicit Topology(const SimConfig& cfg) : cfg_nodes_(cfg.nodes) {
    for (std::size_t i = 0; i < cfg.nodes.size(); ++i) index_[cfg.nodes[i].name] = static_cast<int>(i);
    out_.resize(cfg.nodes.size());
    std::map<std::pair<int, int>, bool> seen;
    for (const auto& l : cfg.links) {
      const int a = node(l.from, "link " + l.id());
      const int b = node(l.to, "link " + l.id());
      if (a == b) throw ValidationError("link " + l.id() + " is a self-loop");
      if (seen[{a, b}]) throw ValidationError("duplicate link " + l.id());
      seen[{a, b}] = true;
      out_[static_cast<std::size_t>(a)].push_back(static_cast<int>(links_.size()));
      links_.push_back(l);
      ends_.emplace_back(a, b);
    }
  }

  int node(const std::string& name, const std::string& context) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError(context + " references unknown node '" + name + "'");
    return it->second;
  }
  const NodeSpec& node_spec(int i) const { return cfg_nodes_[static_cast<std::size_t>(i)]; }
  bool is_router(int i) const { return node_spec(i).kind == NodeKind::Router; }
  const std::vector<LinkSpec>& links() const { return links_; }
  int link_from(int l) const { return ends_[static_cast<std::size_t>(l)].first; }
  int link_to(int l) const { return ends_[static_cast<std::size_t>(l)].second; }

  /// Fewest-hop route as a list of link indices. Only routers forward; ties
  /// resolve by link declaration order.
  std::vector<int> route(const std::string& from, const std::string& to, const std::string& context) const {
    const int s = node(from, context);
    const int d = node(to, context);
    if (s == d) throw ValidationError(context + ": source and destination coincide");
    std::vector<int> via(cfg_nodes_.size(), -1);
    std::vector<bool> visited(cfg_nodes_.size(), false);
    std::deque<int> frontier{s};
    visited[static_cast<std::size_t>(s)] = true;
    while (!frontier.empty()) {
      const int u = frontier.front();
      frontier.pop_front();
      if (u == d) break;
      if (u != s && !is_router(u)) continue;
      for (int l : out_[static_cast<std::size_t>(u)]) {
        const int v = link_to(l);
        if (visited[static_cast<std::size_t>(v)]) continue;
        visited[static_cast<std::size_t>(v)] = true;
        via[static_cast<std::size_t>(v)] = l;
        frontier.push_back(v);
      }
    }
    if (!visited[static_cast<std::size_t>(d)]) throw ValidationError(context + ": no route from " + from + " to " + to);
    std::vector<int> path;
    for (int v = d; v != s; v = link_from(via[static_cast<std::size_t>(v)])) path.push_back(via[static_cast<std::size_t>(v)]);
    return {path.rbegin(), path.rend()};
  }

 private:
  std::vector<NodeSpec> cfg_nodes_;
  std::map<std::string, int> index_;
  std::vector<LinkSpec> links_;
  std::vector<std::pair<int, int>> ends_;
  std::vector<std::vector<int>> out_;
};

// ---------------------------------------------------------------------------
// Event queue

enum class EventType : std::uint8_t { Background, Probe, Departure, Arrival, QueueTick, WindowTick, PeriodTick };

enum class PacketKind : std::uint8_t { Background, Data, Ack };

struct Packet {
  PacketHeader header;
  std::uint32_t size = 0;
  std::uint32_t flow = 0;
  std::uint32_t route = 0;
  std::uint16_t hop = 0;  // index of the next link on the route
  PacketKind kind = PacketKind::Background;
  double sent = 0.0;
};

struct Event {
  double time = 0.0;
  std::uint64_t seq = 0;
  EventType type = EventType::Background;
  std::uint32_t id = 0;
  Packet packet;
};

/// Min-heap on (time, insertion sequence).
class EventQueue {
 public:
  void push(double time, EventType type, std::uint32_t id, const Packet& p = {}) {
    heap_.push(Event{time, next_seq_++, type, id, p});
  }
  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }
  const Event& top() const { return heap_.top(); }
  Event pop() {
    Event e = heap_.top();
    heap_.pop();
    return e;
  }

 private:
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      if (a.time != b.time) return a.time > b.time;
      return a.seq > b.seq;
    }
  };
  std::priority_queue<Event, std::vector<Event>, Later> heap_;
  std::uint64_t next_seq_ = 0;
};

// ---------------------------------------------------------------------------
// Simulator

class Simulator {
 public:
  explicit Simulator(SimConfig cfg) : cfg_(std::move(cfg)), topo_(cfg_) {
    validate_settings(cfg_);
    const auto& specs = topo_.links();
    links_.reserve(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) {
      LinkState ls;
      ls.spec = specs[i];
      ls.service_time = 1.0 / specs[i].capacity;
      if (topo_.is_router(topo_.link_from(static_cast<int>(i)))) {
        ls.meter.emplace(LoadFactorConfig{cfg_.kappa_q, cfg_.gamma, specs[i].capacity, cfg_.t_rho}, cfg_.qhat_weight);
        ls.rng = Rng(cfg_.seed, "mark:" + specs[i].id());
        monitored_.push_back(static_cast<int>(i));
      }
      links_.push_back(std::move(ls));
    }
    for (const auto& f : cfg_.background) setup_background(f);
    for (const auto& f : cfg_.pcn_flows) setup_pcn(f);
  }

  const Topology& topology() const { return topo_; }
  const SimConfig& config() const { return cfg_; }

  RunArtifacts run() {
    RunArtifacts art;
    fill_info(art.info);

    const auto n_windows = whole_steps(cfg_.duration, cfg_.t_rho);
    if (n_windows > 0) events_.push(cfg_.t_rho, EventType::WindowTick, 1);
    events_.push(cfg_.queue_tick, EventType::QueueTick, 1);
    for (std::uint32_t b = 0; b < bg_.size(); ++b) schedule_background(b);
    for (std::uint32_t f = 0; f < pcn_.size(); ++f) {
      events_.push(pcn_[f].spec.start, EventType::Probe, f);
      if (whole_steps(cfg_.duration - pcn_[f].spec.start, cfg_.t_p) > 0)
        events_.push(pcn_[f].spec.start + cfg_.t_p, EventType::PeriodTick, f);
    }

    const double end = cfg_.duration * (1.0 + 1e-12) + 1e-12;
    while (!events_.empty() && events_.top().time <= end) {
      Event ev = events_.pop();
      now_ = ev.time;
      switch (ev.type) {
        case EventType::Background: on_background(ev.id); break;
        case EventType::Probe: on_probe(ev.id); break;
        case EventType::Departure: on_departure(ev.id); break;
        case EventType::Arrival: on_arrival(ev.packet, art); break;
        case EventType::QueueTick: on_queue_tick(); break;
        case EventType::WindowTick: on_window_tick(ev.id, n_windows, art); break;
        case EventType::PeriodTick: on_period_tick(ev.id); break;
      }
    }

    for (const auto& l : links_)
      art.accounting.push_back({l.spec.id(), l.enqueued, l.dequeued, l.dropped, l.queue.size()});
    build_estimates(art);
    return art;
  }

 private:
  struct LinkState {
    LinkSpec spec;
    double service_time = 0.0;
    std::optional<LoadFactorMeter> meter;
    Rng rng;
    std::deque<Packet> queue;  // front is in service
    std::uint64_t enqueued = 0, dequeued = 0, dropped = 0;
  };

  struct BackgroundState {
    std::string name;
    std::uint32_t route = 0;
    std::vector<TraceRecord> recorded;
    std::size_t pos = 0;
    std::optional<SyntheticTrace> synthetic;

    std::optional<TraceRecord> next() {
      if (synthetic) return synthetic->next();
      if (pos < recorded.size()) return recorded[pos++];
      return std::nullopt;
    }
  };

  struct PcnState {
    PcnFlowSpec spec;
    PcnSource source;
    TallyTable tally;
    std::uint32_t data_route = 0;
    std::uint32_t ack_route = 0;
    std::uint64_t sent = 0;
    std::vector<std::string> router_links;
    std::vector<std::vector<std::optional<double>>> e;  // [period][router-1]
  };

  static std::int64_t whole_steps(double span, double step) {
    if (span <= 0.0) return 0;
    return static_cast<std::int64_t>(std::floor(span / step + 1e-9));
  }

  std::uint32_t add_route(std::vector<int> r) {
    routes_.push_back(std::move(r));
    return static_cast<std::uint32_t>(routes_.size() - 1);
  }

  void setup_background(const BackgroundFlowSpec& f) {
    const auto ctx = "background flow '" + f.name + "'";
    BackgroundState b;
    b.name = f.name;
    b.route = add_route(topo_.route(f.source, f.sink, ctx));
    if (f.file) {
      const auto path = (!f.file->empty() && f.file->front() == '/') ? *f.file : cfg_.base_dir + "/" + *f.file;
      b.recorded = load_trace(path).packets;
    } else {
      b.synthetic.emplace(GeneratorParams::from(*f.model, f.params), cfg_.duration,
                          derive_seed(cfg_.seed, "background:" + f.name));
    }
    bg_.push_back(std::move(b));
  }

  void setup_pcn(const PcnFlowSpec& f) {
    const auto ctx = "pcn flow '" + f.name + "'";
    auto data = topo_.route(f.source, f.destination, ctx);
    auto ack = topo_.route(f.destination, f.source, ctx);
    if (topo_.is_router(topo_.node(f.source, ctx)) || topo_.is_router(topo_.node(f.destination, ctx)))
      throw ValidationError(ctx + ": endpoints must be hosts");

    std::vector<std::string> router_links;
    for (std::size_t k = 1; k < data.size(); ++k)
      if (topo_.is_router(topo_.link_from(data[k]))) router_links.push_back(topo_.links()[static_cast<std::size_t>(data[k])].id());
    const int hops = static_cast<int>(router_links.size());
    if (hops == 0) throw ValidationError(ctx + ": path crosses no router");

    double bottleneck = std::numeric_limits<double>::infinity();
    for (int l : data) bottleneck = std::min(bottleneck, topo_.links()[static_cast<std::size_t>(l)].capacity);
    for (int l : ack) bottleneck = std::min(bottleneck, topo_.links()[static_cast<std::size_t>(l)].capacity);
    if (f.rate > cfg_.max_probe_fraction * bottleneck)
      throw ValidationError(ctx + ": probe rate exceeds max_probe_fraction of the path bottleneck capacity");

    ProtocolParams p{f.M, f.presignal, hops};
    p.validate();
    PcnState s{f, PcnSource(p), TallyTable(p, hops), add_route(std::move(data)), add_route(std::move(ack)), 0,
               std::move(router_links), {}};
    pcn_.push_back(std::move(s));
  }

  void fill_info(RunInfo& info) const {
    info.duration = cfg_.duration;
    info.t_rho = cfg_.t_rho;
    info.t_p = cfg_.t_p;
    info.warmup_fraction = cfg_.warmup_fraction;
    info.training_fraction = cfg_.training_fraction;
    info.seed = cfg_.seed;
    for (const auto& p : pcn_)
      info.flows.push_back({p.spec.name, p.spec.M, p.spec.presignal, p.tally.hop_count(), p.spec.start, p.router_links});
    for (int l : monitored_) info.monitored_links.push_back(links_[static_cast<std::size_t>(l)].spec.id());
  }

  // Queueing -----------------------------------------------------------------

  void enqueue(int link, const Packet& p) {
    auto& l = links_[static_cast<std::size_t>(link)];
    ++l.enqueued;
    if (l.meter) l.meter->on_arrival();
    if (l.queue.size() >= static_cast<std::size_t>(l.spec.queue_limit)) {
      ++l.dropped;
      return;
    }
    l.queue.push_back(p);
    if (l.queue.size() == 1) events_.push(now_ + l.service_time, EventType::Departure, static_cast<std::uint32_t>(link));
  }

  void on_departure(std::uint32_t link) {
    auto& l = links_[link];
    Packet p = l.queue.front();
    l.queue.pop_front();
    ++l.dequeued;
    ++p.hop;
    events_.push(now_ + l.spec.delay, EventType::Arrival, 0, p);
    if (!l.queue.empty()) events_.push(now_ + l.service_time, EventType::Departure, link);
  }

  void inject(Packet p) {
    p.hop = 0;
    enqueue(routes_[p.route].front(), p);
  }

  void on_arrival(Packet p, RunArtifacts& art) {
    const auto& route = routes_[p.route];
    if (p.hop == route.size()) {
      deliver(p, art);
      return;
    }
    const int next = route[p.hop];
    if (topo_.is_router(topo_.link_from(next))) {
      auto& l = links_[static_cast<std::size_t>(next)];
      if (p.kind == PacketKind::Data) {
        const int M = pcn_[p.flow].spec.M;
        p.header = router_mark(p.header, cfg_.transform(l.meter->current()), M, l.rng);
      }
      if (p.header.ttl > 0) --p.header.ttl;
    }
    enqueue(next, p);
  }

  void deliver(const Packet& p, RunArtifacts& art) {
    if (p.kind == PacketKind::Data) {
      Packet ack;
      ack.header = make_ack(p.header);
      ack.size = 40;
      ack.flow = p.flow;
      ack.kind = PacketKind::Ack;
      ack.route = pcn_[p.flow].ack_route;
      ack.sent = p.sent;
      inject(ack);
    } else if (p.kind == PacketKind::Ack) {
      auto& s = pcn_[p.flow];
      s.tally.on_ack(p.header);
      art.acks.push_back({now_, s.spec.name, *p.header.echo_of, p.header.ecn, p.sent});
    }
  }

  // Traffic sources ------------------------------------------------------------

  void schedule_background(std::uint32_t b) {
    if (auto r = bg_[b].next()) {
      pending_bg_.resize(bg_.size());
      pending_bg_[b] = *r;
      events_.push(r->time, EventType::Background, b);
    }
  }

  void on_background(std::uint32_t b) {
    Packet p;
    p.size = pending_bg_[b].size;
    p.flow = b;
    p.kind = PacketKind::Background;
    p.route = bg_[b].route;
    p.sent = now_;
    inject(p);
    schedule_background(b);
  }

  void on_probe(std::uint32_t f) {
    auto& s = pcn_[f];
    Packet p;
    p.header = s.source.next_data_header();
    p.size = 1000;
    p.flow = f;
    p.kind = PacketKind::Data;
    p.route = s.data_route;
    p.sent = now_;
    inject(p);
    ++s.sent;
    const double next = s.spec.start + static_cast<double>(s.sent) / s.spec.rate;
    if (next < cfg_.duration) events_.push(next, EventType::Probe, f);
  }

  // Periodic work --------------------------------------------------------------

  void on_queue_tick() {
    for (int i : monitored_) {
      auto& l = links_[static_cast<std::size_t>(i)];
      l.meter->on_queue_sample(static_cast<double>(l.queue.size()));
    }
    ++queue_ticks_;
    const double next = static_cast<double>(queue_ticks_ + 1) * cfg_.queue_tick;
    events_.push(next, EventType::QueueTick, 0);
  }

  void on_window_tick(std::uint32_t k, std::int64_t n_windows, RunArtifacts& art) {
    const double start = static_cast<double>(k - 1) * cfg_.t_rho;
    for (int i : monitored_) {
      auto& l = links_[static_cast<std::size_t>(i)];
      art.ground_truth.push_back({start, l.spec.id(), l.meter->close_window().rho});
    }
    if (static_cast<std::int64_t>(k) < n_windows)
      events_.push(static_cast<double>(k + 1) * cfg_.t_rho, EventType::WindowTick, k + 1);
  }

  void on_period_tick(std::uint32_t f) {
    auto& s = pcn_[f];
    s.e.push_back(s.tally.close_period());
    const auto done = static_cast<std::int64_t>(s.e.size());
    if (done < whole_steps(cfg_.duration - s.spec.start, cfg_.t_p))
      events_.push(s.spec.start + static_cast<double>(done + 1) * cfg_.t_p, EventType::PeriodTick, f);
  }

  /// Fits one forecaster per (source, router) on the training periods and
  /// logs raw and corrected estimates for every closed period.
  void build_estimates(RunArtifacts& art) const {
    const double warm_end = cfg_.duration * cfg_.warmup_fraction;
    const double train_end = warm_end + cfg_.duration * cfg_.training_fraction;
    for (const auto& s : pcn_) {
      for (int r = 0; r < s.tally.hop_count(); ++r) {
        std::vector<std::optional<double>> e(s.e.size());
        std::vector<double> training;
        for (std::size_t p = 0; p < s.e.size(); ++p) {
          e[p] = s.e[p][static_cast<std::size_t>(r)];
          const double p_start = s.spec.start + static_cast<double>(p) * cfg_.t_p;
          const double p_end = p_start + cfg_.t_p;
          if (e[p] && p_start >= warm_end - 1e-9 && p_end <= train_end + 1e-9) training.push_back(*e[p]);
        }
        double theta = 0.0;
        if (training.size() >= kMinTrainingLength) theta = fit_arima011(Series(training));
        const auto pred = forecast_series(e, theta);
        for (std::size_t p = 0; p < e.size(); ++p)
          art.estimates.push_back({s.spec.start + static_cast<double>(p + 1) * cfg_.t_p, s.spec.name, r + 1, e[p], pred[p]});
      }
    }
  }

  SimConfig cfg_;
  Topology topo_;
  std::vector<LinkState> links_;
  std::vector<int> monitored_;
  std::vector<std::vector<int>> routes_;
  std::vector<BackgroundState> bg_;
  std::vector<TraceRecord> pending_bg_;
  std::vector<PcnState> pcn_;
  EventQueue events_;
  double now_ = 0.0;
  std::uint64_t queue_ticks_ = 0;
};

inline RunArtifacts run(const SimConfig& cfg) { return Simulator(cfg).run(); }

}  // namespace pcn
