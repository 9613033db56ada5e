#include "doctest.h"

#include <array>
#include <numeric>

#include "sdr/ec.hpp"

using namespace sdr;
using namespace std::chrono_literals;

namespace {

// Reference arithmetic: carry-less multiply reduced by x^8+x^4+x^3+x^2+1.
std::uint8_t ref_mul(std::uint8_t a, std::uint8_t b) {
  std::uint8_t r = 0;
  while (b) {
    if (b & 1) r ^= a;
    const bool hi = a & 0x80;
    a = static_cast<std::uint8_t>(a << 1);
    if (hi) a ^= 0x1d;
    b >>= 1;
  }
  return r;
}

std::uint8_t ref_inv(std::uint8_t a) {
  for (int x = 1; x < 256; ++x)
    if (ref_mul(a, static_cast<std::uint8_t>(x)) == 1) return static_cast<std::uint8_t>(x);
  return 0;
}

using Matrix = std::vector<std::vector<std::uint8_t>>;

// Generator rows: identity on top, then the parity rows.
Matrix generator(const EcGeometry& g) {
  Matrix m(g.total(), std::vector<std::uint8_t>(g.data_blocks, 0));
  for (std::uint32_t j = 0; j < g.data_blocks; ++j) m[j][j] = 1;
  for (std::uint32_t i = 0; i < g.parity_blocks; ++i) {
    for (std::uint32_t j = 0; j < g.data_blocks; ++j) {
      if (g.code == EcCode::kXor) {
        m[g.data_blocks + i][j] = (j % g.parity_blocks == i) ? 1 : 0;
      } else {
        m[g.data_blocks + i][j] = ref_inv(static_cast<std::uint8_t>((g.data_blocks + i) ^ j));
      }
    }
  }
  return m;
}

std::size_t rank(Matrix a) {
  std::size_t r = 0;
  const std::size_t cols = a.empty() ? 0 : a[0].size();
  for (std::size_t c = 0; c < cols && r < a.size(); ++c) {
    std::size_t piv = r;
    while (piv < a.size() && a[piv][c] == 0) ++piv;
    if (piv == a.size()) continue;
    std::swap(a[piv], a[r]);
    const std::uint8_t inv = ref_inv(a[r][c]);
    for (auto& x : a[r]) x = ref_mul(x, inv);
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (i == r || a[i][c] == 0) continue;
      const std::uint8_t f = a[i][c];
      for (std::size_t k = 0; k < cols; ++k) a[i][k] ^= ref_mul(f, a[r][k]);
    }
    ++r;
  }
  return r;
}

std::vector<std::vector<std::byte>> random_blocks(std::size_t n, std::size_t len, Rng& r) {
  std::vector<std::vector<std::byte>> out(n, std::vector<std::byte>(len));
  for (auto& b : out)
    for (auto& x : b) x = static_cast<std::byte>(r() & 0xff);
  return out;
}

// Exhaustive check of every erasure pattern for one geometry.
void check_all_patterns(const EcGeometry& g, Rng& rng) {
  const std::size_t len = 5;
  const auto data = random_blocks(g.data_blocks, len, rng);
  std::vector<std::span<const std::byte>> views(data.begin(), data.end());
  const auto parity = ec_encode(g, views);
  REQUIRE(parity.size() == g.parity_blocks);

  const Matrix gen = generator(g);
  // parity equals the reference matrix product
  for (std::uint32_t i = 0; i < g.parity_blocks; ++i)
    for (std::size_t b = 0; b < len; ++b) {
      std::uint8_t acc = 0;
      for (std::uint32_t j = 0; j < g.data_blocks; ++j)
        acc ^= ref_mul(gen[g.data_blocks + i][j], static_cast<std::uint8_t>(data[j][b]));
      REQUIRE(static_cast<std::uint8_t>(parity[i][b]) == acc);
    }

  const std::uint32_t n = g.total();
  for (std::uint32_t mask = 0; mask < (1U << n); ++mask) {
    std::vector<bool> present(n);
    Matrix rows;
    std::vector<IndexedBlock> blocks;
    for (std::uint32_t b = 0; b < n; ++b) {
      present[b] = (mask >> b) & 1U;
      if (!present[b]) continue;
      rows.push_back(gen[b]);
      blocks.push_back({b, b < g.data_blocks ? std::span<const std::byte>(data[b])
                                             : std::span<const std::byte>(parity[b - g.data_blocks])});
    }
    const bool expect = rank(rows) == g.data_blocks;
    REQUIRE(ec_decodable(g, present) == expect);
    const auto out = ec_decode(g, blocks);
    REQUIRE(out.has_value() == expect);
    if (out) REQUIRE(*out == data);
  }
}

std::vector<std::byte> pattern(std::size_t n, std::uint64_t seed) {
  Rng r(seed);
  std::vector<std::byte> v(n);
  for (auto& b : v) b = static_cast<std::byte>(r() & 0xff);
  return v;
}

}  // namespace

TEST_CASE("field arithmetic matches the reference") {
  for (int a = 0; a < 256; ++a)
    for (int b = 0; b < 256; ++b) {
      const auto x = static_cast<std::uint8_t>(a), y = static_cast<std::uint8_t>(b);
      REQUIRE(gf256::mul(x, y) == ref_mul(x, y));
      REQUIRE(gf256::add(x, y) == (x ^ y));
      if (b) REQUIRE(gf256::div(gf256::mul(x, y), y) == x);
    }
  for (int a = 1; a < 256; ++a) REQUIRE(gf256::inv(static_cast<std::uint8_t>(a)) == ref_inv(static_cast<std::uint8_t>(a)));
  CHECK(gf256::mul(0x80, 2) == 0x1d);
  CHECK_THROWS(gf256::inv(0));
}

TEST_CASE("config validation") {
  CHECK_NOTHROW(EcConfig{32, 8, EcCode::kMds}.validate());
  CHECK_NOTHROW(EcConfig{32, 8, EcCode::kXor}.validate());
  CHECK_THROWS_AS((EcConfig{5, 2, EcCode::kXor}.validate()), std::invalid_argument);
  CHECK_NOTHROW(EcConfig{5, 2, EcCode::kMds}.validate());
  CHECK_THROWS_AS((EcConfig{0, 2, EcCode::kMds}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((EcConfig{4, 0, EcCode::kMds}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((EcConfig{250, 7, EcCode::kMds}.validate()), std::invalid_argument);
  CHECK(EcConfig{32, 8}.parity_ratio() == 4.0);
  CHECK(EcConfig{32, 8}.group_size() == 5);
}

TEST_CASE("shortened geometry") {
  EcConfig c{32, 8, EcCode::kMds};
  CHECK(parity_blocks_for(32, c) == 8);
  CHECK(parity_blocks_for(4, c) == 1);
  CHECK(parity_blocks_for(5, c) == 2);
  CHECK(parity_blocks_for(1, c) == 1);
}

TEST_CASE("xor: every erasure pattern, k <= 8, m <= 4") {
  Rng rng(21);
  for (std::uint32_t m = 1; m <= 4; ++m)
    for (std::uint32_t k = m; k <= 8; k += m) {
      CAPTURE(k);
      CAPTURE(m);
      check_all_patterns(geometry_for(k, EcConfig{k, m, EcCode::kXor}), rng);
    }
  // shortened final submessages of a (8, 4) code
  for (std::uint32_t d = 1; d < 8; ++d) check_all_patterns(geometry_for(d, EcConfig{8, 4, EcCode::kXor}), rng);
}

TEST_CASE("mds: every erasure pattern, k + m <= 12") {
  Rng rng(22);
  for (std::uint32_t k = 1; k <= 11; ++k)
    for (std::uint32_t m = 1; k + m <= 12; ++m) {
      CAPTURE(k);
      CAPTURE(m);
      check_all_patterns(geometry_for(k, EcConfig{k, m, EcCode::kMds}), rng);
    }
}

TEST_CASE("mds at production size recovers any m erasures") {
  Rng rng(5);
  const EcConfig c{32, 8, EcCode::kMds};
  const auto data = random_blocks(32, 256, rng);
  std::vector<std::span<const std::byte>> views(data.begin(), data.end());
  const auto parity = ec_encode(c, views);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::uint32_t> idx(40);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[rng() % (i + 1)]);
    std::vector<IndexedBlock> blocks;
    for (std::size_t i = 0; i < 32; ++i) {
      const auto b = idx[i];
      blocks.push_back({b, b < 32 ? std::span<const std::byte>(data[b]) : std::span<const std::byte>(parity[b - 32])});
    }
    const auto out = ec_decode(c, blocks);
    REQUIRE(out);
    REQUIRE(*out == data);
    blocks.pop_back();
    REQUIRE_FALSE(ec_decode(c, blocks));
  }
}

TEST_CASE("codec argument errors") {
  const EcGeometry g = geometry_for(4, EcConfig{4, 2, EcCode::kMds});
  std::vector<std::byte> a(4), b(5);
  std::vector<std::span<const std::byte>> bad{a, a, a, b};
  CHECK_THROWS_AS(ec_encode(g, bad), std::invalid_argument);
  std::vector<std::span<const std::byte>> few{a, a};
  CHECK_THROWS_AS(ec_encode(g, few), std::invalid_argument);
  std::vector<IndexedBlock> dup{{0, a}, {0, a}, {1, a}, {2, a}};
  CHECK_THROWS_AS(ec_decode(g, dup), std::invalid_argument);
  std::vector<IndexedBlock> range{{0, a}, {1, a}, {2, a}, {6, a}};
  CHECK_THROWS_AS(ec_decode(g, range), std::invalid_argument);
}

TEST_CASE("control wire formats") {
  EcNack n{{0, 3, 70000}};
  auto w = encode_ec_nack(n);
  CHECK(w.size() == 14);
  CHECK(decode_ec_nack(w) == n);
  w.pop_back();
  CHECK_THROWS_AS(decode_ec_nack(w), std::invalid_argument);
  CHECK(encode_ec_ack(EcAck{}).empty());
  CHECK(wire_size(ControlMessage{n}) == 14);
  SrAck a{5, {0x81}};
  auto aw = encode_sr_ack(a);
  CHECK(aw.size() == 5);
  CHECK(static_cast<int>(aw[3]) == 5);
  CHECK(decode_sr_ack(aw) == a);
  CHECK_THROWS_AS(decode_sr_ack(std::span<const std::byte>(aw).first(3)), std::invalid_argument);
}

TEST_CASE("layout splits into full and shortened submessages") {
  const auto l = EcLayout::make(100 * 65536 - 10, 65536, EcConfig{32, 8, EcCode::kMds});
  CHECK(l.chunks == 100);
  CHECK(l.submessages == 4);
  CHECK(l.geometry(0).data_blocks == 32);
  CHECK(l.geometry(3).data_blocks == 4);
  CHECK(l.geometry(3).parity_blocks == 1);
  CHECK(l.parity_chunks() == 25);
  CHECK(l.data_bytes(3) == 4 * 65536 - 10);
  CHECK(l.parity_bytes(3) == 65536);

  ChannelParams ch;
  const auto t = EcTimers::defaults(l, ch);
  CHECK(t.fto == from_seconds(125 * ch.serialization_seconds(65536)) + ch.rtt);
  CHECK(t.global_timeout == 4 * t.fto + 4 * ch.rtt);
  CHECK_THROWS_AS(EcLayout::make(0, 65536, EcConfig{}), std::invalid_argument);
}

namespace {

// Two-packet chunks of 8 KiB; (4, 2) code over 8 chunks: packets 0-7 carry
// data submessage 0, 8-11 its parity, 12-19 data 1, 20-23 parity 1.
EcTransferOptions small_opts(EcCode code) {
  EcTransferOptions o;
  o.link.qp.chunk_size_packets = 2;
  o.link.seed = 3;
  o.ec = EcConfig{4, 2, code};
  return o;
}

Channel::DropFilter drop_packets(std::vector<std::uint64_t> idx) {
  return [idx](const Packet&, std::uint64_t i) { return std::find(idx.begin(), idx.end(), i) != idx.end(); };
}

}  // namespace

TEST_CASE("lossless EC write") {
  for (auto code : {EcCode::kXor, EcCode::kMds}) {
    auto o = small_opts(code);
    auto msg = pattern(8 * 8192 - 100, 1);
    auto r = run_ec_transfer(o, msg);
    CHECK(r.received == msg);
    CHECK_FALSE(r.fallback);
    CHECK(r.data_chunks_injected == 8);
    CHECK(r.parity_chunks_injected == 4);
    const Duration floor = from_seconds(12 * o.link.channel.serialization_seconds(8192)) + o.link.channel.rtt;
    CHECK(r.completion >= floor - 1us);
    CHECK(r.completion <= floor + o.link.channel.rtt / 8 + 1us);
  }
}

TEST_CASE("parity repairs drops without fallback") {
  for (auto code : {EcCode::kXor, EcCode::kMds}) {
    auto o = small_opts(code);
    o.data_drop_filter = drop_packets({0, 2, 13});  // chunks 0, 1 of sub 0; chunk 0 of sub 1
    auto msg = pattern(8 * 8192, 2);
    auto r = run_ec_transfer(o, msg);
    CHECK(r.received == msg);
    CHECK_FALSE(r.fallback);
    CHECK(r.retransmitted_chunks == 0);
  }
}

TEST_CASE("xor group loss needs fallback, mds does not") {
  auto msg = pattern(8 * 8192, 4);
  auto x = small_opts(EcCode::kXor);
  x.data_drop_filter = drop_packets({0, 4});  // chunks 0 and 2: same group
  auto rx = run_ec_transfer(x, msg);
  CHECK(rx.received == msg);
  CHECK(rx.fallback);
  CHECK(rx.retransmitted_chunks == 4);  // the whole data submessage
  auto m = small_opts(EcCode::kMds);
  m.data_drop_filter = drop_packets({0, 4});
  auto rm = run_ec_transfer(m, msg);
  CHECK(rm.received == msg);
  CHECK_FALSE(rm.fallback);
  CHECK(rx.completion > rm.completion);
}

TEST_CASE("fallback after the timeout") {
  auto o = small_opts(EcCode::kMds);
  o.data_drop_filter = drop_packets({0, 2, 4});
  auto msg = pattern(8 * 8192, 6);
  auto r = run_ec_transfer(o, msg);
  CHECK(r.received == msg);
  CHECK(r.fallback);
  CHECK(r.retransmitted_chunks == 4);
  const auto l = EcLayout::make(msg.size(), 8192, o.ec);
  const auto t = EcTimers::defaults(l, o.link.channel);
  // fto from the first chunk, NACK back, then one SR round trip
  CHECK(r.completion >= t.fto + o.link.channel.rtt);
  CHECK(r.completion <= t.fto + 2 * o.link.channel.rtt + 2 * (o.link.channel.rtt / 8));
}

TEST_CASE("random losses on data and control keep the payload intact") {
  for (auto code : {EcCode::kXor, EcCode::kMds}) {
    for (double p : {0.01, 0.1, 0.3}) {
      EcTransferOptions o;
      o.ec = EcConfig{8, 2, code};
      o.link.qp.chunk_size_packets = 4;
      o.link.channel.p_drop = p;
      o.link.control_p_drop = p;
      o.link.channel.reorder_jitter = 1us;
      o.link.seed = 99;
      auto msg = pattern(50 * 16384 + 77, 8);
      auto r = run_ec_transfer(o, msg);
      CHECK(r.received == msg);
      CHECK(r.parity_chunks_injected == 2 * 6 + 1);  // 6 full + shortened (3 data, 1 parity)
    }
  }
}

TEST_CASE("payload-free runs time like payload runs") {
  auto o = small_opts(EcCode::kMds);
  o.link.channel.p_drop = 0.05;
  auto msg = pattern(40 * 8192, 9);
  auto a = run_ec_transfer(o, msg);
  auto b = run_ec_transfer(o, std::uint64_t{msg.size()});
  CHECK(a.completion == b.completion);
  CHECK(a.fallback == b.fallback);
}

TEST_CASE("encode cost delays parity") {
  auto o = small_opts(EcCode::kMds);
  auto base = run_ec_transfer(o, std::uint64_t{8 * 8192});
  o.encode_cost_per_byte = Duration(1);  // 1 ns per byte
  auto slow = run_ec_transfer(o, std::uint64_t{8 * 8192});
  CHECK(slow.completion >= base.completion + Duration(8 * 8192) - o.link.channel.rtt / 8);
}

TEST_CASE("global timeout aborts when nothing gets through") {
  auto o = small_opts(EcCode::kMds);
  o.link.channel.p_drop = 1.0;
  CHECK_THROWS_AS(run_ec_transfer(o, std::uint64_t{8192}), TimeoutError);
}

TEST_CASE("too many submessages for the slot space") {
  EcTransferOptions o;
  o.ec = EcConfig{1, 1, EcCode::kMds};
  o.link.qp.chunk_size_packets = 1;
  CHECK_THROWS_AS(run_ec_transfer(o, std::uint64_t{513 * 4096}), std::invalid_argument);
  CHECK_NOTHROW(run_ec_transfer(o, std::uint64_t{512 * 4096}));
}
