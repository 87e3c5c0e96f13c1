#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "pcn/artifacts.hpp"
#include "pcn/config.hpp"
#include "pcn/eval.hpp"
#include "pcn/sim.hpp"

using namespace pcn;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto p = fs::temp_directory_path() / ("pcn_sim_" + std::string(info->name()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

SimConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "test.ini");
}

// A -> R1 -> B with one PCN probe.
std::string line_topology(double duration, double probe_rate, double cap = 1000) {
  std::ostringstream os;
  os << "[sim]\nduration = " << duration << "\n"
     << "[nodes]\nhosts = A B\nrouters = R1\n"
     << "[link A R1]\ncapacity = " << cap << "\ndelay = 0.001\n"
     << "[link R1 B]\ncapacity = " << cap << "\ndelay = 0.002\n"
     << "[pcn p]\nsource = A\ndestination = B\nrate = " << probe_rate << "\n";
  return os.str();
}

// S, A -> R1 -> R2 -> D, B with a bottleneck between the routers.
std::string dumbbell(double duration, const std::string& trace_file, double probe_rate, bool presignal = false,
                     int queue_limit = 100) {
  std::ostringstream os;
  os << "[sim]\nduration = " << duration << "\n"
     << "[nodes]\nhosts = S D A B\nrouters = R1 R2\n"
     << "[link S R1]\ncapacity = 100000\n"
     << "[link A R1]\ncapacity = 100000\n"
     << "[link R1 R2]\ncapacity = 1000\ndelay = 0.005\nqueue_limit = " << queue_limit << "\n"
     << "[link R2 D]\ncapacity = 100000\n"
     << "[link R2 B]\ncapacity = 100000\n"
     << "[pcn p]\nsource = A\ndestination = B\nrate = " << probe_rate << "\npresignal = " << (presignal ? "true" : "false")
     << "\n"
     << "[background bg]\nsource = S\nsink = D\nfile = " << trace_file << "\n";
  return os.str();
}

std::string evenly_spaced_trace(const fs::path& dir, double rate, double duration) {
  const auto path = dir / "even.trace";
  std::ofstream os(path);
  os << "# arrival_time_seconds size_bytes\n";
  const auto n = static_cast<long>(rate * duration);
  for (long k = 0; k < n; ++k) os << detail::format_double(static_cast<double>(k) / rate) << " 1000\n";
  return path.string();
}

std::map<std::string, std::vector<double>> rho_by_link(const RunArtifacts& a) {
  std::map<std::string, std::vector<double>> m;
  for (const auto& g : a.ground_truth) m[g.link].push_back(g.rho);
  return m;
}

const LinkAccounting& account(const RunArtifacts& a, const std::string& link) {
  for (const auto& r : a.accounting)
    if (r.link == link) return r;
  throw std::runtime_error("no link " + link);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(EventQueue, OrdersByTimeThenInsertion) {
  EventQueue q;
  q.push(2.0, EventType::Probe, 1);
  q.push(1.0, EventType::Probe, 2);
  q.push(1.0, EventType::Probe, 3);
  q.push(0.5, EventType::Probe, 4);
  q.push(1.0, EventType::Probe, 5);
  std::vector<std::uint32_t> ids;
  double last = -1;
  while (!q.empty()) {
    const auto e = q.pop();
    EXPECT_GE(e.time, last);
    last = e.time;
    ids.push_back(e.id);
  }
  EXPECT_EQ(ids, (std::vector<std::uint32_t>{4, 2, 3, 5, 1}));
}

TEST(Topology, RoutesOnlyThroughRouters) {
  const auto c = parse(R"(
[nodes]
hosts = A B H
routers = R1 R2
[link A H]
capacity = 1
[link H B]
capacity = 1
[link A R1]
capacity = 1
[link R1 R2]
capacity = 1
[link R2 B]
capacity = 1
)");
  Topology t(c);
  const auto r = t.route("A", "B", "test");
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(t.links()[static_cast<std::size_t>(r[0])].id(), "A->R1");
  EXPECT_EQ(t.links()[static_cast<std::size_t>(r[2])].id(), "R2->B");
  EXPECT_THROW(t.route("A", "Z", "test"), ValidationError);
  EXPECT_THROW(t.route("A", "A", "test"), ValidationError);
}

TEST(Topology, RejectsBadLinks) {
  EXPECT_THROW(Topology(parse("[nodes]\nhosts = A\n[link A Q]\ncapacity = 1\n")), ValidationError);
  EXPECT_THROW(Topology(parse("[nodes]\nhosts = A B\n[link A B]\ncapacity = 1\n[link A B]\ncapacity = 1\n")),
               ValidationError);
}

TEST(Simulator, IdleNetworkStaysNearZero) {
  auto cfg = parse(line_topology(20, 10));
  cfg.seed = 1;
  const auto a = run(cfg);
  for (const auto& g : a.ground_truth) EXPECT_LT(g.rho, 3.0) << g.link << " @ " << g.time;
  int n = 0;
  for (const auto& e : a.estimates)
    if (e.e_raw) {
      EXPECT_LE(*e.e_raw, 100.0);
      ++n;
    }
  double marked = 0;
  for (const auto& k : a.acks) marked += k.ecn;
  EXPECT_LT(marked / static_cast<double>(a.acks.size()), 0.01);
  EXPECT_GT(n, 0);
}

TEST(Simulator, SaturatedLinkReportsFullLoad) {
  const auto dir = scratch_dir("sat");
  // gamma * C = 980 packets/s on the bottleneck.
  auto cfg = parse(dumbbell(20, evenly_spaced_trace(dir, 980, 20), 5));
  cfg.seed = 2;
  const auto a = run(cfg);
  const auto rho = rho_by_link(a);
  for (std::size_t k = 1; k < rho.at("R1->R2").size(); ++k) EXPECT_GT(rho.at("R1->R2")[k], 99.0) << "window " << k;
  for (const auto& [link, v] : rho) {
    if (link == "R1->R2") continue;
    for (double r : v) EXPECT_LT(r, 15.0) << link;
  }
}

TEST(Simulator, ServiceTimePlusPropagationOnIdlePath) {
  auto cfg = parse(line_topology(5, 2));
  cfg.seed = 3;
  const auto a = run(cfg);
  ASSERT_FALSE(a.acks.empty());
  // Data A->R1->B then ACK B->R1->A; each hop costs 1/C + delay.
  const double rtt = 4 * (1.0 / 1000) + 2 * (0.001 + 0.002);
  for (const auto& k : a.acks) EXPECT_NEAR(k.time - k.sent_time, rtt, 1e-9);
}

TEST(Simulator, DropTailCountsAndConservation) {
  const auto dir = scratch_dir("burst");
  const auto path = dir / "burst.trace";
  {
    std::ofstream os(path);
    for (int k = 0; k < 90; ++k) os << "0 1000\n";
  }
  auto cfg = parse(dumbbell(3, path.string(), 5, false, 40));
  cfg.seed = 4;
  const auto a = run(cfg);
  const auto& l = account(a, "R1->R2");
  EXPECT_EQ(l.enqueued, 90u + 15u);  // burst plus three seconds of probes
  EXPECT_GE(l.dropped, 45u);
  EXPECT_LE(l.dropped, 51u);
  for (const auto& r : a.accounting) EXPECT_TRUE(r.conserved()) << r.link;
}

TEST(Simulator, BurstWithinLimitDepartsInOrder) {
  auto cfg = parse(line_topology(2, 50));
  cfg.seed = 5;
  const auto a = run(cfg);
  for (std::size_t i = 1; i < a.acks.size(); ++i) {
    EXPECT_LE(a.acks[i - 1].time, a.acks[i].time);
    EXPECT_LT(a.acks[i - 1].sent_time, a.acks[i].sent_time);
  }
  for (const auto& r : a.accounting) EXPECT_EQ(r.dropped, 0u);
}

TEST(Simulator, GroundTruthSampleCount) {
  for (double duration : {10.0, 10.1, 10.3}) {
    auto cfg = parse(line_topology(duration, 10));
    cfg.seed = 6;
    const auto a = run(cfg);
    const auto rho = rho_by_link(a);
    ASSERT_EQ(rho.size(), 2u);  // R1->B and R1->A
    const auto expected = static_cast<std::size_t>(std::floor(duration / 0.2 + 1e-9));
    for (const auto& [link, v] : rho) EXPECT_EQ(v.size(), expected) << link;
  }
}

TEST(Simulator, CausalityAndEcnEcho) {
  auto cfg = load_config(std::string(PCN_SOURCE_DIR) + "/configs/parking_lot.ini");
  cfg.duration = 20;
  cfg.seed = 7;
  const auto a = run(cfg);
  // Minimum one-way propagation along the parking lot: access + 4 backbone + exit hop, both ways.
  const double min_rtt = 2 * (0.001 + 4 * 0.005 + 0.001);
  std::size_t marked = 0;
  for (const auto& k : a.acks) {
    ASSERT_GE(k.time - k.sent_time, min_rtt - 1e-12);
    marked += k.ecn;
  }
  EXPECT_GT(marked, 0u);
  for (const auto& r : a.accounting) EXPECT_TRUE(r.conserved()) << r.link;
}

TEST(Simulator, ParkingLotHasFiveRoutersEachWay) {
  auto cfg = load_config(std::string(PCN_SOURCE_DIR) + "/configs/parking_lot.ini");
  cfg.duration = 30;
  cfg.seed = 8;
  const auto a = run(cfg);
  ASSERT_EQ(a.info.flows.size(), 2u);
  const auto& left = a.info.flow("left");
  const auto& right = a.info.flow("right");
  EXPECT_EQ(left.hop_count, 5);
  EXPECT_EQ(right.hop_count, 5);
  EXPECT_EQ(left.router_links, (std::vector<std::string>{"R1->R2", "R2->R3", "R3->R4", "R4->R5", "R5->B"}));
  EXPECT_EQ(right.router_links, (std::vector<std::string>{"R5->R4", "R4->R3", "R3->R2", "R2->R1", "R1->A"}));
  std::map<std::string, std::set<int>> routers;
  for (const auto& e : a.estimates)
    if (e.e_raw) routers[e.source].insert(e.router);
  EXPECT_EQ(routers["left"], (std::set<int>{1, 2, 3, 4, 5}));
  EXPECT_EQ(routers["right"], (std::set<int>{1, 2, 3, 4, 5}));
  // One estimate row per router per closed period.
  EXPECT_EQ(a.estimates.size(), 2u * 5u * static_cast<std::size_t>(std::floor(30 / 0.4 + 1e-9)));
}

TEST(Simulator, DeterministicForSameSeed) {
  auto cfg = load_config(std::string(PCN_SOURCE_DIR) + "/configs/parking_lot.ini");
  cfg.duration = 15;
  cfg.seed = 9;
  const auto d1 = scratch_dir("a"), d2 = scratch_dir("b"), d3 = scratch_dir("c");
  write_artifacts(d1, run(cfg));
  write_artifacts(d2, run(cfg));
  cfg.seed = 10;
  write_artifacts(d3, run(cfg));
  for (const auto& f : artifact_files()) EXPECT_EQ(slurp(d1 / f), slurp(d2 / f)) << f;
  EXPECT_NE(slurp(d1 / "acks.csv"), slurp(d3 / "acks.csv"));
}

TEST(Simulator, EstimateTracksConstantLoad) {
  const auto dir = scratch_dir("const");
  auto cfg = parse(dumbbell(200, evenly_spaced_trace(dir, 490, 200), 100, true));
  cfg.t_p = 20;
  cfg.seed = 11;
  const auto a = run(cfg);
  const auto rho = rho_by_link(a).at("R1->R2");
  std::map<long, std::pair<double, double>> per_period;  // sum of marked, count
  for (const auto& k : a.acks) {
    if (k.ipid % 32 != 0) continue;  // router 1 only
    auto& p = per_period[static_cast<long>(std::floor(k.time / 20))];
    p.first += k.ecn;
    p.second += 1;
  }
  int checked = 0;
  for (long l = 1; l < 10; ++l) {
    double L = 0;
    for (int w = 0; w < 100; ++w) L += rho[static_cast<std::size_t>(l * 100 + w)];
    L /= 100;
    const auto [m, n] = per_period.at(l);
    const double e = 100 * m / n;
    const double sd = 100 * std::sqrt(L / 100 * (1 - L / 100) / n);
    EXPECT_NEAR(e, L, 3 * sd + 0.5) << "period " << l;
    ++checked;
  }
  EXPECT_EQ(checked, 9);
}

TEST(Simulator, ValidationErrors) {
  auto base = line_topology(5, 10);
  auto bad_node = parse(base + "[background b]\nsource = A\nsink = Q\nmodel = poisson\nparams = rate=1\n");
  EXPECT_THROW(run(bad_node), ValidationError);
  EXPECT_THROW(run(parse(line_topology(5, 101))), ValidationError);  // above 10% of 1000
  auto router_end = parse(line_topology(5, 10) + "[pcn q]\nsource = R1\ndestination = B\nrate = 1\n");
  EXPECT_THROW(run(router_end), ValidationError);
  auto missing = parse(base + "[background b]\nsource = A\nsink = B\nfile = /nope/missing.trace\n");
  try {
    run(missing);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("/nope/missing.trace"), std::string::npos);
  }
}

TEST(Simulator, StoredEstimatesMatchThetaZeroReplay) {
  auto cfg = load_config(std::string(PCN_SOURCE_DIR) + "/configs/parking_lot.ini");
  cfg.duration = 30;
  cfg.seed = 12;
  const auto a = run(cfg);
  std::map<std::pair<std::string, int>, std::vector<std::optional<double>>> e;
  for (const auto& r : a.estimates) e[{r.source, r.router}].push_back(r.e_raw);
  for (const auto& [key, series] : e) EXPECT_EQ(forecast_series(series, 0.0), series);
  // Too little training at 30 s: every corrected prediction falls back to the raw one.
  for (const auto& r : a.estimates) EXPECT_EQ(r.l_hat, r.e_raw);
}
