#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sdr/collectives.hpp"

using namespace sdr;

namespace {

Scenario lossy(double p) {
  Scenario sc;
  sc.channel.p_drop = p;
  return sc;
}

const Scheme kSr = Scheme::sr();
const Scheme kEc = Scheme::erasure({32, 8, EcCode::kMds});

}  // namespace

TEST_CASE("ring schedule") {
  for (std::uint32_t N = 2; N <= 9; ++N) {
    for (std::uint32_t r = 0; r < 2 * N - 2; ++r) {
      std::vector<std::uint32_t> seen;
      for (std::uint32_t i = 0; i < N; ++i) seen.push_back(ring_slice(N, i, r));
      std::sort(seen.begin(), seen.end());
      for (std::uint32_t j = 0; j < N; ++j) CHECK(seen[j] == j);
      // what arrives from the left neighbour is forwarded next round
      if (r + 1 < 2 * N - 2)
        for (std::uint32_t i = 0; i < N; ++i) CHECK(ring_slice(N, i, r + 1) == ring_slice(N, (i + N - 1) % N, r));
    }
    // after reduce-scatter node i owns the reduced slice i + 1
    for (std::uint32_t i = 0; i < N; ++i) CHECK(ring_slice(N, i, N - 1) == (i + 1) % N);
  }
  CHECK(ring_slice_chunks(4, 10, 0) == 3);
  CHECK(ring_slice_chunks(4, 10, 3) == 1);
  CHECK(ring_slice_chunks(4, 2, 3) == 0);
  for (std::uint64_t b : {1ULL, 7ULL, 64ULL, 1001ULL}) {
    std::uint64_t total = 0;
    for (std::uint32_t j = 0; j < 6; ++j) total += ring_slice_chunks(6, b, j);
    CHECK(total == b);
  }
}

TEST_CASE("recurrence by hand") {
  // N = 2, two rounds
  auto s = ring_recurrence({{1.0, 5.0}, {2.0, 1.0}});
  CHECK(s.finish[0] == std::vector<double>{0.0, 0.0});
  CHECK(s.finish[1] == std::vector<double>{1.0, 5.0});
  CHECK(s.finish[2] == std::vector<double>{7.0, 6.0});
  CHECK(s.completion() == 7.0);
  CHECK(s.mean_stage() == 2.25);
  CHECK_THROWS_AS(ring_recurrence({{1.0, 2.0}, {1.0}}), std::invalid_argument);
}

TEST_CASE("degenerate and lossless rings") {
  Rng rng(1);
  auto sampler = stochastic_stage(lossy(0.0), kSr);
  CHECK(ring_allreduce_sim(1, 1000, sampler, rng) == 0.0);
  CHECK(ring_allreduce_sim(0, 1000, sampler, rng) == 0.0);
  const Scenario sc = lossy(0.0);
  for (std::uint32_t N : {2U, 4U, 8U}) {
    const double want = (2.0 * N - 2) * (static_cast<double>(2048 / N) * sc.t_inj() + 0.025);
    const auto s = ring_allreduce_run(N, 2048, sampler, rng);
    CHECK(s.completion() == doctest::Approx(want).epsilon(1e-12));
    CHECK(s.step_message_chunks == 2048 / N);
    REQUIRE(s.finish.size() == 2 * N - 1);
    for (double t : s.finish[0]) CHECK(t == 0.0);
  }
}

TEST_CASE("property: finish times never decrease and a slower stage never helps") {
  Rng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    const std::uint32_t N = 2 + static_cast<std::uint32_t>(rng() % 7);
    std::vector<std::vector<double>> st(2 * N - 2, std::vector<double>(N));
    for (auto& row : st)
      for (auto& x : row) x = rng.uniform01();
    const auto s = ring_recurrence(st);
    for (std::size_t r = 1; r < s.finish.size(); ++r)
      for (std::uint32_t i = 0; i < N; ++i) REQUIRE(s.finish[r][i] >= s.finish[r - 1][i]);
    auto bumped = st;
    bumped[rng() % bumped.size()][rng() % N] += rng.uniform01();
    REQUIRE(ring_recurrence(bumped).completion() >= s.completion());
    // rotating the ring relabels nodes only
    auto rot = st;
    const std::uint32_t k = 1 + static_cast<std::uint32_t>(rng() % (N - 1));
    for (auto& row : rot) std::rotate(row.begin(), row.begin() + k, row.end());
    REQUIRE(ring_recurrence(rot).completion() == s.completion());
    // completion covers every node's own chain of stages
    REQUIRE(s.completion() >= (2.0 * N - 2) * s.mean_stage() * (1 - 1e-12));
  }
}

TEST_CASE("nodes are statistically interchangeable") {
  const auto sampler = stochastic_stage(lossy(1e-4), kSr);
  const std::uint32_t N = 4;
  const int trials = 4000;
  std::vector<std::vector<double>> fin(N);
  for (int t = 0; t < trials; ++t) {
    Rng rng = Rng::substream(3, t);
    const auto s = ring_allreduce_run(N, 2048, sampler, rng);
    for (std::uint32_t i = 0; i < N; ++i) fin[i].push_back(s.finish.back()[i]);
  }
  std::vector<double> means, ses;
  for (auto& v : fin) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / trials;
    double ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    means.push_back(m);
    ses.push_back(std::sqrt(ss / (trials - 1) / trials));
  }
  for (std::uint32_t i = 1; i < N; ++i) {
    CAPTURE(i);
    CHECK(std::abs(means[i] - means[0]) <= 4 * std::hypot(ses[i], ses[0]));
  }
}

TEST_CASE("lower bound dominance") {
  for (std::uint32_t N : {2U, 4U, 8U})
    for (double p : {1e-5, 1e-4, 1e-3})
      for (const auto& scheme : {kSr, kEc}) {
        const auto r = run_allreduce_mc(N, 2048, stochastic_stage(lossy(p), scheme), 300, 9, 4);
        CAPTURE(N);
        CAPTURE(p);
        CHECK(r.lower_bound == doctest::Approx((2.0 * N - 2) * r.mean_stage));
        CHECK(r.stats.mean >= r.lower_bound * (1 - 1e-12));
      }
  // against the closed form: C + mu_X = E[t] of one 512-chunk Write
  const Scenario sc = lossy(1e-4);
  const double et = e_t_sr_analytical(sc.sr_params(512, SrVariant::kRto)).value;
  const auto r = run_allreduce_mc(4, 2048, stochastic_stage(sc, kSr), 2000, 10, 4);
  CHECK(r.stats.mean >= allreduce_lower_bound({4, et, 0.0}));
}

TEST_CASE("mc runner determinism") {
  const auto s = stochastic_stage(lossy(1e-3), kEc);
  const auto a = run_allreduce_mc(4, 1024, s, 200, 5, 1);
  const auto b = run_allreduce_mc(4, 1024, s, 200, 5, 3);
  CHECK(a.samples == b.samples);
  CHECK(a.mean_stage == b.mean_stage);
  CHECK_THROWS_AS(run_allreduce_mc(4, 1024, s, 0, 5), std::invalid_argument);
}

TEST_CASE("speedup grid") {
  Scenario sc;
  const std::vector<std::uint64_t> buf{2048};
  const std::vector<double> ps{0.0, 1e-4};
  const std::vector<std::uint32_t> Ns{4};
  const std::vector<Scheme> same{kSr, kSr, kEc};
  const auto g = speedup_grid(sc, buf, ps, Ns, same, 1000, 2, 4);
  REQUIRE(g.cells.size() == 6);
  REQUIRE(g.speedups.size() == 4);
  // identical schemes with a shared seed give identical samples
  CHECK(g.speedups[0].mean_speedup == 1.0);
  CHECK(g.speedups[0].p999_speedup == 1.0);
  CHECK(g.speedups[2].mean_speedup == 1.0);
  // lossless: both deterministic, EC pays for parity only
  const double t = sc.t_inj();
  const double sr = 6 * (512 * t + 0.025), ec = 6 * (640 * t + 0.025);
  CHECK(g.cells[0].result.stats.mean == doctest::Approx(sr));
  CHECK(g.cells[2].result.stats.mean == doctest::Approx(ec));
  CHECK(g.speedups[1].p999_speedup == doctest::Approx(sr / ec));
  // a lossy channel makes EC the better choice
  CHECK(g.speedups[3].p999_speedup > 2.0);
  CHECK(g.speedups[3].candidate.name() == "ec_mds");
  const std::vector<double> none;
  CHECK_THROWS_AS(speedup_grid(sc, buf, none, Ns, same, 10, 1), std::invalid_argument);
}

TEST_CASE("event-driven stages agree with the stochastic model when lossless") {
  Scenario sc;
  sc.channel.rtt = std::chrono::milliseconds(2);
  for (const auto& scheme : {kSr, Scheme::erasure({4, 2, EcCode::kMds})}) {
    Rng a(1), b(1);
    const double ev = ring_allreduce_sim(3, 24, event_stage(sc, scheme), a);
    const double st = ring_allreduce_sim(3, 24, stochastic_stage(sc, scheme), b);
    CAPTURE(scheme.name());
    // the simulated receiver reports on a poll grid
    CHECK(ev >= st);
    CHECK(ev <= st + 4 * 4 * to_seconds(SrConfig::defaults(sc.channel, sc.chunk_bytes).ack_poll_period));
  }
  sc.channel.p_drop = 0.01;
  Rng r(3);
  CHECK(ring_allreduce_sim(2, 16, event_stage(sc, kEc), r) > 0.0);
}
