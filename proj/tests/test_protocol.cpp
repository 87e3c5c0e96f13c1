#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "pcn/protocol.hpp"
#include "pcn/rng.hpp"

using namespace pcn;

namespace {

// Brute-force residue check written without the library helpers.
int routers_matching(int ipid, int M, int h) {
  int n = 0;
  for (int i = 1; i <= h; ++i) {
    const int ttl = M - (i - 1);
    if (((ttl % M) + M) % M == ipid % M) ++n;
  }
  return n;
}

}  // namespace

TEST(IsMarkable, Examples) {
  EXPECT_TRUE(is_markable(32, 0, 32));
  EXPECT_FALSE(is_markable(31, 0, 32));
  EXPECT_TRUE(is_markable(30, 62, 32));
}

TEST(IsMarkable, AgreesWithBruteForceForAllSmallInputs) {
  for (int M = 1; M <= 40; ++M)
    for (int ttl = 0; ttl <= 64; ++ttl)
      for (int ipid = 0; ipid < 3 * M; ++ipid) EXPECT_EQ(is_markable(ttl, ipid, M), ttl % M == ipid % M);
}

TEST(NextDataHeader, IncrementsAndSetsTtl) {
  PcnSource src(ProtocolParams{}, 7);
  const auto h = src.next_data_header();
  EXPECT_EQ(h.ipid, 8);
  EXPECT_EQ(h.ttl, 32);
  EXPECT_FALSE(h.ecn);
  EXPECT_FALSE(h.is_ack);
}

TEST(NextDataHeader, WrapsAt16Bits) {
  PcnSource src(ProtocolParams{}, 65535);
  EXPECT_EQ(src.next_data_header().ipid, 0);
}

TEST(NextDataHeader, PresignalCyclesMarkableResidues) {
  PcnSource src(ProtocolParams{32, true, 5});
  const int expected[] = {0, 31, 30, 29, 28};
  std::set<int> seen;
  for (int n = 0; n < 500; ++n) {
    const auto h = src.next_data_header();
    EXPECT_EQ(h.ipid % 32, expected[n % 5]) << "packet " << n;
    seen.insert(h.ipid);
  }
  EXPECT_EQ(seen.size(), 500u);
}

TEST(NextDataHeader, PresignalEveryPacketMarkableBySomeRouter) {
  for (int h = 1; h <= 32; ++h) {
    PcnSource src(ProtocolParams{32, true, h});
    for (int n = 0; n < 3 * h; ++n) {
      const auto hdr = src.next_data_header();
      EXPECT_EQ(routers_matching(hdr.ipid, 32, h), 1) << "h=" << h;
    }
  }
}

TEST(ProtocolParams, Validation) {
  EXPECT_THROW((ProtocolParams{0, false, std::nullopt}.validate()), ValidationError);
  EXPECT_THROW((ProtocolParams{32, true, std::nullopt}.validate()), ValidationError);
  EXPECT_THROW((ProtocolParams{32, true, 33}.validate()), ValidationError);
  EXPECT_THROW((ProtocolParams{32, true, 0}.validate()), ValidationError);
  EXPECT_NO_THROW((ProtocolParams{32, true, 32}.validate()));
  EXPECT_NO_THROW((ProtocolParams{32, false, 40}.validate()));
}

TEST(ExactlyOneMarker, ExhaustiveForM32) {
  const int M = 32;
  for (int h = 1; h <= M; ++h) {
    int residues_with_marker = 0;
    for (int r = 0; r < M; ++r) {
      const int n = routers_matching(r, M, h);
      ASSERT_LE(n, 1) << "h=" << h << " residue=" << r;
      residues_with_marker += n;
    }
    EXPECT_EQ(residues_with_marker, h);
  }
}

TEST(AttributeRouter, Examples) {
  EXPECT_EQ(attribute_router(0, 32, 5)->router, 1);
  EXPECT_EQ(attribute_router(31, 32, 5)->router, 2);
  EXPECT_FALSE(attribute_router(5, 32, 5).has_value());
}

TEST(AttributeRouter, RoundTripAgainstMarkability) {
  const int M = 32;
  for (int h = 1; h <= M; ++h)
    for (int ipid = 0; ipid < 2 * M; ++ipid) {
      const auto a = attribute_router(ipid, M, h);
      for (int i = 1; i <= h; ++i) {
        const bool markable = is_markable(arrival_ttl(i, M), ipid, M);
        EXPECT_EQ(markable, a && a->router == i) << "h=" << h << " ipid=" << ipid << " i=" << i;
      }
      if (a) {
        EXPECT_FALSE(a->ambiguous);
      }
    }
}

TEST(AttributeRouter, LongPathPicksFirstAndFlags) {
  // h = 40 > M = 32: router 1 and router 33 share residue 0.
  const auto a = attribute_router(0, 32, 40);
  ASSERT_TRUE(a);
  EXPECT_EQ(a->router, 1);
  EXPECT_TRUE(a->ambiguous);
  const auto b = attribute_router(20, 32, 40);  // only router 13
  ASSERT_TRUE(b);
  EXPECT_EQ(b->router, 13);
  EXPECT_FALSE(b->ambiguous);
}

TEST(RouterMark, ZeroAndFullLoad) {
  Rng rng(1);
  PacketHeader h;
  h.ttl = 32;
  h.ipid = 0;
  for (int n = 0; n < 1000; ++n) {
    EXPECT_FALSE(router_mark(h, 0.0, 32, rng).ecn);
    EXPECT_TRUE(router_mark(h, 100.0, 32, rng).ecn);
  }
}

TEST(RouterMark, NonMarkableNeverMarked) {
  Rng rng(2);
  PacketHeader h;
  h.ttl = 31;
  h.ipid = 0;
  for (int n = 0; n < 1000; ++n) EXPECT_FALSE(router_mark(h, 100.0, 32, rng).ecn);
}

TEST(RouterMark, AcksPassUntouched) {
  Rng rng(3);
  PacketHeader ack;
  ack.is_ack = true;
  ack.ttl = 32;
  ack.ipid = 0;
  EXPECT_EQ(router_mark(ack, 100.0, 32, rng), ack);
}

TEST(RouterMark, NeverClearsEcn) {
  Rng rng(4);
  for (int ttl : {32, 31}) {
    PacketHeader h;
    h.ttl = static_cast<std::uint8_t>(ttl);
    h.ecn = true;
    for (double lf : {0.0, 50.0, 100.0}) EXPECT_TRUE(router_mark(h, lf, 32, rng).ecn);
  }
}

TEST(RouterMark, BinomialOracleAt5612) {
  Rng rng(2024);
  PacketHeader h;
  h.ttl = 32;
  h.ipid = 64;
  const int n = 10000;
  const double p = 0.5612;
  int marked = 0;
  for (int k = 0; k < n; ++k) marked += router_mark(h, 56.12, 32, rng).ecn;
  const double sd = std::sqrt(n * p * (1 - p));
  EXPECT_NEAR(marked, n * p, 3 * sd);
  EXPECT_NEAR(3 * sd, 149.0, 1.0);
}

TEST(MakeAck, CopiesEcnAndIdentity) {
  for (bool ecn : {false, true}) {
    PacketHeader d;
    d.ipid = 77;
    d.ecn = ecn;
    const auto a = make_ack(d);
    EXPECT_TRUE(a.is_ack);
    EXPECT_EQ(a.ecn, ecn);
    ASSERT_TRUE(a.echo_of);
    EXPECT_EQ(*a.echo_of, 77);
  }
}

TEST(MakeAck, OneAckPerPacketBijective) {
  PcnSource src(ProtocolParams{});
  std::set<int> ids;
  for (int n = 0; n < 1000; ++n) ids.insert(*make_ack(src.next_data_header()).echo_of);
  EXPECT_EQ(ids.size(), 1000u);
}

TEST(TallyTable, SingleMarkedAck) {
  TallyTable t(ProtocolParams{}, 5);
  PacketHeader d;
  d.ipid = 0;
  d.ecn = true;
  EXPECT_EQ(t.on_ack(make_ack(d)), 1);
  EXPECT_EQ(t.tally(1).markable_acks, 1u);
  EXPECT_EQ(t.tally(1).marked_acks, 1u);
}

TEST(TallyTable, UnattributableAckIgnored) {
  TallyTable t(ProtocolParams{}, 5);
  PacketHeader d;
  d.ipid = 5;
  d.ecn = true;
  EXPECT_FALSE(t.on_ack(make_ack(d)).has_value());
  for (const auto& r : t.tallies()) {
    EXPECT_EQ(r.markable_acks, 0u);
    EXPECT_EQ(r.marked_acks, 0u);
  }
}

TEST(TallyTable, ThreeHundredTwentyAcks) {
  TallyTable t(ProtocolParams{}, 5);
  for (int ipid = 0; ipid < 320; ++ipid) {
    PacketHeader d;
    d.ipid = static_cast<std::uint16_t>(ipid);
    t.on_ack(make_ack(d));
  }
  for (int i = 1; i <= 5; ++i) EXPECT_EQ(t.tally(i).markable_acks, 10u) << "router " << i;
}

TEST(TallyTable, ClosePeriodRatiosAndCarryForward) {
  TallyTable t(ProtocolParams{}, 2);
  auto ack = [](int ipid, bool ecn) {
    PacketHeader d;
    d.ipid = static_cast<std::uint16_t>(ipid);
    d.ecn = ecn;
    return make_ack(d);
  };
  // Router 1 (residue 0): 5 of 10 marked. Router 2 (residue 31): nothing.
  for (int k = 0; k < 10; ++k) t.on_ack(ack(32 * k, k < 5));
  auto e = t.close_period();
  ASSERT_TRUE(e[0]);
  EXPECT_DOUBLE_EQ(*e[0], 50.0);
  EXPECT_FALSE(e[1].has_value());
  EXPECT_EQ(t.tally(1).markable_acks, 0u);

  for (int k = 0; k < 10; ++k) t.on_ack(ack(32 * k + 31, true));
  e = t.close_period();
  EXPECT_DOUBLE_EQ(*e[0], 50.0);  // carried forward
  EXPECT_DOUBLE_EQ(*e[1], 100.0);

  e = t.close_period();
  EXPECT_DOUBLE_EQ(*e[0], 50.0);
  EXPECT_DOUBLE_EQ(*e[1], 100.0);
  EXPECT_EQ(t.period_index(), 3);
}

TEST(TallyTable, CarryForwardOf42) {
  TallyTable t(ProtocolParams{}, 1);
  PacketHeader d;
  for (int k = 0; k < 50; ++k) {
    d.ipid = static_cast<std::uint16_t>(32 * k);
    d.ecn = k < 21;
    t.on_ack(make_ack(d));
  }
  EXPECT_DOUBLE_EQ(*t.close_period()[0], 42.0);
  EXPECT_DOUBLE_EQ(*t.close_period()[0], 42.0);
}

TEST(TallyTable, MarkedNeverExceedsMarkable) {
  Rng rng(9);
  TallyTable t(ProtocolParams{}, 5);
  for (int n = 0; n < 5000; ++n) {
    PacketHeader d;
    d.ipid = static_cast<std::uint16_t>(rng.next());
    d.ecn = rng.bernoulli(0.5);
    t.on_ack(make_ack(d));
    for (const auto& r : t.tallies()) ASSERT_LE(r.marked_acks, r.markable_acks);
  }
}

TEST(PresignalDensity, SampleRatioIsMOverH) {
  const int h = 5, M = 32, n = 32 * 500;
  TallyTable off(ProtocolParams{M, false, h}, h), on(ProtocolParams{M, true, h}, h);
  PcnSource s_off(ProtocolParams{M, false, h}), s_on(ProtocolParams{M, true, h});
  for (int k = 0; k < n; ++k) {
    off.on_ack(make_ack(s_off.next_data_header()));
    on.on_ack(make_ack(s_on.next_data_header()));
  }
  for (int i = 1; i <= h; ++i) {
    const double ratio = static_cast<double>(on.tally(i).markable_acks) / static_cast<double>(off.tally(i).markable_acks);
    EXPECT_NEAR(ratio, static_cast<double>(M) / h, 1e-9) << "router " << i;
  }
}
