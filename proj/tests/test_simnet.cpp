#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "sdr/simnet.hpp"

using namespace sdr;
using namespace std::chrono_literals;

TEST_CASE("events fire in timestamp order with FIFO ties") {
  Simulator sim;
  std::string order;
  sim.schedule_at(SimTime(5ns), [&] { order += 'A'; });
  sim.schedule_at(SimTime(5ns), [&] { order += 'B'; });
  sim.schedule_at(SimTime(2ns), [&] { order += 'C'; });
  sim.run();
  CHECK(order == "CAB");
  CHECK(sim.now() == SimTime(5ns));
}

TEST_CASE("schedule in the past is rejected") {
  Simulator sim;
  sim.schedule_at(SimTime(7ns), [] {});
  sim.run();
  CHECK_THROWS_AS(sim.schedule_at(SimTime(3ns), [] {}), std::invalid_argument);
}

TEST_CASE("cancel semantics") {
  Simulator sim;
  int fired = 0;
  auto a = sim.schedule_at(SimTime(5ns), [&] { ++fired; });
  auto b = sim.schedule_at(SimTime(6ns), [&] { ++fired; });
  CHECK(sim.cancel(a));
  CHECK_FALSE(sim.cancel(a));
  sim.run();
  CHECK(fired == 1);
  CHECK_FALSE(sim.cancel(b));
}

TEST_CASE("dequeued timestamps never decrease") {
  Simulator sim;
  Rng rng(11);
  std::vector<std::int64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    auto t = SimTime(Duration(static_cast<std::int64_t>(rng() % 10000)));
    sim.schedule_at(t, [&] {
      seen.push_back(sim.now().time_since_epoch().count());
      if (seen.size() < 3000) sim.schedule_after(Duration(static_cast<std::int64_t>(rng() % 50)), [] {});
    });
  }
  sim.run();
  for (std::size_t i = 1; i < seen.size(); ++i) CHECK(seen[i - 1] <= seen[i]);
}

TEST_CASE("transmit timing at 400 Gbit/s") {
  ChannelParams p;
  p.bandwidth_bits_per_sec = 400e9;
  p.rtt = 25ms;
  Channel ch(p, 1);
  Packet pkt;
  pkt.payload_len = 4096;
  auto arrival = ch.transmit(pkt, SimTime{});
  REQUIRE(arrival);
  // 4096 * 8 / 4e11 s = 81.92 ns, plus 12.5 ms one-way, rounded to the tick.
  CHECK(arrival->time_since_epoch().count() == 12'500'082);

  // A second packet queues behind the first.
  auto second = ch.transmit(pkt, SimTime{});
  REQUIRE(second);
  CHECK(second->time_since_epoch().count() == 12'500'164);
}

TEST_CASE("serialization does not accumulate rounding error") {
  ChannelParams p;
  p.rtt = 0ns;
  Channel ch(p, 1);
  Packet pkt;
  pkt.payload_len = 4096;
  for (int i = 0; i < 16; ++i) ch.transmit(pkt, SimTime{});
  // 16 * 81.92 = 1310.72 ns
  CHECK(ch.busy_until().time_since_epoch().count() == 1311);
}

TEST_CASE("p_drop = 1 drops everything") {
  ChannelParams p;
  p.p_drop = 1.0;
  Channel ch(p, 3);
  Packet pkt;
  pkt.payload_len = 100;
  for (int i = 0; i < 1000; ++i) CHECK_FALSE(ch.transmit(pkt, SimTime{}).has_value());
}

TEST_CASE("drop fraction and independence") {
  ChannelParams p;
  p.p_drop = 0.1;
  p.rtt = 0ns;
  Channel ch(p, 2024);
  Packet pkt;
  pkt.payload_len = 0;
  const int n = 1'000'000;
  long drops = 0;
  // 2x2 table of (previous dropped, current dropped).
  double table[2][2] = {{0, 0}, {0, 0}};
  int prev = -1;
  for (int i = 0; i < n; ++i) {
    const int d = ch.transmit(pkt, SimTime{}) ? 0 : 1;
    drops += d;
    if (prev >= 0) table[prev][d] += 1;
    prev = d;
  }
  const double frac = static_cast<double>(drops) / n;
  CHECK(frac == doctest::Approx(0.1).epsilon(0.01));

  // Chi-square test of independence, 1 dof; 10.83 is the 0.1% critical value.
  const double total = table[0][0] + table[0][1] + table[1][0] + table[1][1];
  double chi2 = 0;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      const double expected = (table[a][0] + table[a][1]) * (table[0][b] + table[1][b]) / total;
      chi2 += (table[a][b] - expected) * (table[a][b] - expected) / expected;
    }
  }
  CHECK(chi2 < 10.83);
}

TEST_CASE("identical seed gives identical drop pattern and jitter") {
  ChannelParams p;
  p.p_drop = 0.3;
  p.reorder_jitter = 1000ns;
  Channel a(p, 99), b(p, 99), c(p, 100);
  Packet pkt;
  pkt.payload_len = 64;
  bool any_diff = false;
  for (int i = 0; i < 1000; ++i) {
    auto x = a.transmit(pkt, SimTime{});
    auto y = b.transmit(pkt, SimTime{});
    auto z = c.transmit(pkt, SimTime{});
    CHECK(x == y);
    any_diff |= (x != z);
  }
  CHECK(any_diff);
}

TEST_CASE("forced drop filter") {
  ChannelParams p;
  Channel ch(p, 1);
  ch.set_drop_filter([](const Packet&, std::uint64_t idx) { return idx == 1; });
  Packet pkt;
  pkt.payload_len = 10;
  CHECK(ch.transmit(pkt, SimTime{}).has_value());
  CHECK_FALSE(ch.transmit(pkt, SimTime{}).has_value());
  CHECK(ch.transmit(pkt, SimTime{}).has_value());
  CHECK(ch.dropped() == 1);
}

TEST_CASE("channel parameter validation names the field") {
  ChannelParams p;
  p.p_drop = 1.5;
  CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("p_drop"), std::invalid_argument);
  p = {};
  p.bandwidth_bits_per_sec = 0;
  CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("bandwidth"), std::invalid_argument);
}

TEST_CASE("rto follows rtt + alpha * rtt") {
  ChannelParams p;
  p.rtt = 25ms;
  p.alpha = 2.0;
  CHECK(p.rto() == 75ms);
}
