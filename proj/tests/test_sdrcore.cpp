#include <algorithm>
#include <cstring>
#include <numeric>
#include <set>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "sdr/qp.hpp"
#include "sdr/rng.hpp"

using namespace sdr;

namespace {

std::vector<std::byte> random_bytes(std::size_t n, Rng& rng) {
  std::vector<std::byte> v(n);
  for (auto& b : v) b = static_cast<std::byte>(rng() & 0xff);
  return v;
}

// Sender and receiver QPs with CTS wired directly and packets captured.
struct Pair {
  explicit Pair(QpConfig cfg) : send(cfg), recv(cfg) {
    recv.set_cts_sink([this](const ClearToSend& c) { send.on_cts(c); });
    send.set_packet_sink([this](Packet p) { wire.push_back(std::move(p)); });
  }
  void deliver_all() {
    for (auto& p : wire) recv.on_packet_arrival(p);
    wire.clear();
  }
  SendQp send;
  RecvQp recv;
  std::vector<Packet> wire;
};

QpConfig small_cfg(std::uint32_t chunk_packets = 2) {
  QpConfig c;
  c.mtu_bytes = 64;
  c.chunk_size_packets = chunk_packets;
  c.max_msg_size_bytes = 64 * 1024;
  return c;
}

bool coalescing_holds(const MessageDescriptor& d) {
  for (std::uint64_t c = 0; c < d.chunk_bitmap.size(); ++c) {
    bool all = true;
    for (std::uint64_t p = c * d.chunk_size_packets; p < std::min<std::uint64_t>((c + 1) * d.chunk_size_packets, d.total_packets); ++p) {
      all = all && d.packet_bitmap.test(p);
    }
    if (all != d.chunk_bitmap.test(c)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("transport immediate encoding") {
  CHECK(encode_immediate({3, 5, 0xA}) == 0x00C0005Au);
  CHECK(encode_immediate({3, 5, 0xA}) == 12583002u);
  CHECK(encode_immediate({0, 0, 0}) == 0u);
  CHECK_THROWS_AS(encode_immediate({1024, 0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(encode_immediate({0, 1u << 18, 0}), std::invalid_argument);
  CHECK_THROWS_AS(encode_immediate({0, 0, 16}), std::invalid_argument);

  ImmSplit wide{8, 22, 2};
  CHECK(decode_immediate(encode_immediate({255, (1u << 22) - 1, 3}, wide), wide) ==
        TransportImmediate{255, (1u << 22) - 1, 3});
  CHECK_THROWS_AS(ImmSplit({10, 18, 3}).validate(), std::invalid_argument);
}

TEST_CASE("immediate round trip over random triples") {
  Rng rng(7);
  for (int i = 0; i < 100000; ++i) {
    TransportImmediate t{static_cast<std::uint32_t>(rng() % 1024), static_cast<std::uint32_t>(rng() % (1u << 18)),
                         static_cast<std::uint32_t>(rng() % 16)};
    REQUIRE(decode_immediate(encode_immediate(t)) == t);
  }
}

TEST_CASE("qp config limits") {
  QpConfig c;
  CHECK_NOTHROW(c.validate());
  c.max_msg_size_bytes = (std::uint64_t{1} << 30) + 1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("recv_post allocates sequential slots and wraps with a new generation") {
  QpConfig cfg = small_cfg();
  RecvQp recv(cfg);
  std::vector<std::byte> buf(64);
  std::vector<RecvHandle> handles;
  for (int i = 0; i < 1024; ++i) handles.push_back(recv.recv_post(buf));
  CHECK(handles[0].msg_id() == 0);
  CHECK(handles[0].generation() == 0);
  CHECK(handles[1023].msg_id() == 1023);

  // All 1024 slots posted: the next post must back off.
  CHECK_THROWS_AS(recv.recv_post(buf), BackpressureError);

  recv.recv_complete(handles[0]);
  RecvHandle again = recv.recv_post(buf);
  CHECK(again.msg_id() == 0);
  CHECK(again.generation() == 1);
}

TEST_CASE("one-shot packetization") {
  QpConfig cfg;  // 4 KiB MTU
  SUBCASE("16 KiB message is four packets") {
    Pair pr(cfg);
    std::vector<std::byte> buf(16384);
    pr.recv.recv_post(buf);
    std::vector<std::byte> data(16384, std::byte{1});
    pr.send.send_one_shot(data);
    REQUIRE(pr.wire.size() == 4);
    for (std::uint32_t i = 0; i < 4; ++i) {
      CHECK(decode_immediate(pr.wire[i].immediate).packet_offset == i);
      CHECK(pr.wire[i].payload_len == 4096);
    }
  }
  SUBCASE("one byte message is one packet") {
    Pair pr(cfg);
    std::vector<std::byte> buf(1);
    pr.recv.recv_post(buf);
    std::vector<std::byte> data(1, std::byte{9});
    pr.send.send_one_shot(data);
    REQUIRE(pr.wire.size() == 1);
    CHECK(pr.wire[0].payload_len == 1);
  }
  SUBCASE("1 GiB message fits the 18-bit offset field") {
    SendQp send(cfg);
    send.on_cts({0, 0, std::uint64_t{1} << 30});
    std::uint64_t count = 0;
    std::uint32_t max_off = 0;
    send.set_packet_sink([&](Packet p) {
      ++count;
      max_off = std::max(max_off, decode_immediate(p.immediate).packet_offset);
    });
    send.send_one_shot(phantom_payload(std::size_t{1} << 30));
    CHECK(count == 262144);
    CHECK(max_off == 262143);
    CHECK(max_off < (1u << 18));
  }
  SUBCASE("errors") {
    SendQp send(cfg);
    std::vector<std::byte> data(10);
    CHECK_THROWS_AS(send.send_one_shot(data), ProtocolError);  // no CTS yet
    send.on_cts({0, 0, cfg.max_msg_size_bytes});
    CHECK_THROWS_AS(send.send_one_shot(phantom_payload(cfg.max_msg_size_bytes + 1)), std::invalid_argument);
    // Immediate needs at least 8 packets.
    CHECK_THROWS_AS(send.send_one_shot(data, 0xDEADBEEFu), std::invalid_argument);
  }
}

TEST_CASE("packets stripe round-robin across channels and address the root key") {
  QpConfig cfg = small_cfg();
  cfg.num_channels = 3;
  Pair pr(cfg);
  std::vector<std::byte> b0(64), b1(640);
  pr.recv.recv_post(b0);
  pr.recv.recv_post(b1);
  pr.send.send_one_shot(std::vector<std::byte>(64));
  pr.wire.clear();
  pr.send.send_one_shot(std::vector<std::byte>(640));
  REQUIRE(pr.wire.size() == 10);
  for (std::uint32_t i = 0; i < 10; ++i) {
    CHECK(pr.wire[i].channel_qp_index == i % 3);
    CHECK(pr.wire[i].dest_offset_bytes == cfg.max_msg_size_bytes + i * 64);
  }
}

TEST_CASE("streaming send") {
  QpConfig cfg;
  Pair pr(cfg);
  std::vector<std::byte> buf(256 * 1024);
  RecvHandle rh = pr.recv.recv_post(buf);
  SendHandle sh = pr.send.send_stream_start();
  std::vector<std::byte> chunk(64 * 1024, std::byte{5});
  pr.send.send_stream_continue(sh, 64 * 1024, chunk);
  REQUIRE(pr.wire.size() == 16);
  for (std::uint32_t i = 0; i < 16; ++i) CHECK(decode_immediate(pr.wire[i].immediate).packet_offset == 16 + i);

  pr.deliver_all();
  Bitmap after_first = pr.recv.recv_bitmap_get(rh);
  CHECK(after_first.test(1));
  pr.send.send_stream_continue(sh, 64 * 1024, chunk);
  pr.deliver_all();
  CHECK(pr.recv.recv_bitmap_get(rh) == after_first);
  CHECK(pr.recv.stats().duplicates == 16);

  CHECK_THROWS_AS(pr.send.send_stream_continue(sh, 100, chunk), std::invalid_argument);
  pr.send.send_stream_end(sh);
  CHECK_FALSE(sh.stream_open());
  CHECK_THROWS_AS(pr.send.send_stream_continue(sh, 0, chunk), ProtocolError);
}

TEST_CASE("chunk bit sets only when all of its packets arrived") {
  QpConfig cfg = small_cfg(2);
  Pair pr(cfg);
  std::vector<std::byte> buf(4 * 64);
  RecvHandle rh = pr.recv.recv_post(buf);
  CHECK(pr.recv.recv_bitmap_get(rh).none());
  pr.send.send_one_shot(std::vector<std::byte>(4 * 64));
  REQUIRE(pr.wire.size() == 4);

  auto r0 = pr.recv.on_packet_arrival(pr.wire[0]);
  CHECK(r0.action == ArrivalAction::kAccepted);
  CHECK_FALSE(r0.chunk_completed);
  CHECK_FALSE(pr.recv.recv_bitmap_get(rh).test(0));
  auto r1 = pr.recv.on_packet_arrival(pr.wire[1]);
  REQUIRE(r1.chunk_completed);
  CHECK(*r1.chunk_completed == 0);
  CHECK(pr.recv.recv_bitmap_get(rh).test(0));

  // A duplicate never reports the chunk twice.
  auto dup = pr.recv.on_packet_arrival(pr.wire[1]);
  CHECK(dup.action == ArrivalAction::kDuplicate);
  CHECK_FALSE(dup.chunk_completed);
}

TEST_CASE("final partial chunk") {
  QpConfig cfg = small_cfg(2);
  Pair pr(cfg);
  std::vector<std::byte> buf(5 * 64);
  RecvHandle rh = pr.recv.recv_post(buf);
  CHECK(pr.recv.recv_bitmap_get(rh).size() == 3);
  pr.send.send_one_shot(std::vector<std::byte>(5 * 64));
  auto r = pr.recv.on_packet_arrival(pr.wire[4]);
  REQUIRE(r.chunk_completed);
  CHECK(*r.chunk_completed == 2);
}

TEST_CASE("user immediate reconstruction") {
  QpConfig cfg = small_cfg(2);
  Pair pr(cfg);
  std::vector<std::byte> buf(10 * 64);
  RecvHandle rh = pr.recv.recv_post(buf, true);
  pr.send.send_one_shot(std::vector<std::byte>(10 * 64), 0xDEADBEEFu);
  for (int i = 0; i < 7; ++i) pr.recv.on_packet_arrival(pr.wire[i]);
  CHECK_FALSE(pr.recv.recv_imm_get(rh).has_value());
  pr.recv.on_packet_arrival(pr.wire[7]);
  REQUIRE(pr.recv.recv_imm_get(rh).has_value());
  CHECK(*pr.recv.recv_imm_get(rh) == 0xDEADBEEFu);

  std::vector<std::byte> other(64);
  RecvHandle plain = pr.recv.recv_post(other);
  CHECK_THROWS_AS(pr.recv.recv_imm_get(plain), ProtocolError);
}

TEST_CASE("completion nulls the slot and filters late packets by generation") {
  QpConfig cfg = small_cfg(2);
  cfg.imm_split = {1, 27, 4};  // two slots, so reuse happens fast
  Pair pr(cfg);
  std::vector<std::byte> a(4 * 64), b(4 * 64), c(4 * 64);
  RecvHandle h0 = pr.recv.recv_post(a);
  RecvHandle h1 = pr.recv.recv_post(b);
  std::vector<std::byte> payload_a(4 * 64, std::byte{0xAA});
  pr.send.send_one_shot(payload_a);
  std::vector<Packet> late = pr.wire;  // message on slot 0, generation 0
  pr.wire.clear();

  // Deliver all but the last packet; complete early with one chunk missing.
  for (int i = 0; i < 3; ++i) pr.recv.on_packet_arrival(late[i]);
  pr.recv.recv_complete(h0);
  CHECK(h0.state() == DescriptorState::kCompleted);
  CHECK(pr.recv.recv_bitmap_get(h0).test(0));
  CHECK_FALSE(pr.recv.recv_bitmap_get(h0).test(1));
  CHECK_THROWS_AS(pr.recv.recv_complete(h0), ProtocolError);

  // Late packet hits the NULL key.
  auto r = pr.recv.on_packet_arrival(late[3]);
  CHECK(r.action == ArrivalAction::kDiscardedNull);

  // Slot 1 still posted; slot 0 reposts at generation 1.
  pr.recv.recv_complete(h1);
  RecvHandle h2 = pr.recv.recv_post(c);
  CHECK(h2.msg_id() == 0);
  CHECK(h2.generation() == 1);
  const auto before = pr.recv.stats().discarded_generation;
  r = pr.recv.on_packet_arrival(late[3]);
  CHECK(r.action == ArrivalAction::kDiscardedGeneration);
  CHECK(pr.recv.stats().discarded_generation == before + 1);
  CHECK(pr.recv.recv_bitmap_get(h2).none());
  CHECK(std::all_of(c.begin(), c.end(), [](std::byte x) { return x == std::byte{0}; }));

  pr.recv.recv_release(h0);
  CHECK_THROWS_AS(pr.recv.recv_bitmap_get(h0), ProtocolError);
}

TEST_CASE("drop-set correspondence and zero-copy framing under random drops") {
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    QpConfig cfg = small_cfg(1 + static_cast<std::uint32_t>(rng() % 5));
    Pair pr(cfg);
    const std::size_t len = 1 + rng() % (40 * 64);
    std::vector<std::byte> buf(len);
    RecvHandle rh = pr.recv.recv_post(buf);
    auto data = random_bytes(len, rng);
    pr.send.send_one_shot(data);
    std::set<std::size_t> dropped;
    std::vector<std::size_t> order(pr.wire.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (auto i : order) {
      if (rng.bernoulli(0.2)) {
        dropped.insert(i);
        continue;
      }
      pr.recv.on_packet_arrival(pr.wire[i]);
    }
    const auto& d = pr.recv.descriptor(rh);
    REQUIRE(coalescing_holds(d));
    for (std::size_t i = 0; i < pr.wire.size(); ++i) {
      CHECK(d.packet_bitmap.test(i) == !dropped.contains(i));
      if (!dropped.contains(i)) {
        const std::size_t off = i * cfg.mtu_bytes;
        const std::size_t n = std::min<std::size_t>(cfg.mtu_bytes, len - off);
        CHECK(std::memcmp(buf.data() + off, data.data() + off, n) == 0);
      }
    }
    const Bitmap chunks = pr.recv.recv_bitmap_get(rh);
    for (std::size_t c = 0; c < chunks.size(); ++c) {
      bool clean = true;
      for (auto i : dropped) clean = clean && (i / cfg.chunk_size_packets != c);
      CHECK(chunks.test(c) == clean);
    }
  }
}

TEST_CASE("sequential messages across four ID wraparounds") {
  QpConfig cfg = small_cfg(2);
  Pair pr(cfg);
  Rng rng(5);
  for (int i = 0; i < 4 * 1024; ++i) {
    std::vector<std::byte> buf(3 * 64);
    RecvHandle h = pr.recv.recv_post(buf);
    CHECK(h.generation() == static_cast<std::uint32_t>(i / 1024));
    auto data = random_bytes(buf.size(), rng);
    pr.send.send_one_shot(data);
    pr.deliver_all();
    REQUIRE(pr.recv.recv_bitmap_get(h).all());
    REQUIRE(buf == data);
    pr.recv.recv_complete(h);
  }
}

TEST_CASE("trace records") {
  QpConfig cfg = small_cfg(2);
  Pair pr(cfg);
  std::ostringstream out;
  Tracer tracer(out, [] { return SimTime{}; });
  pr.recv.set_tracer(&tracer);
  std::vector<std::byte> buf(2 * 64);
  pr.recv.recv_post(buf);
  pr.send.send_one_shot(std::vector<std::byte>(2 * 64));
  pr.deliver_all();
  const std::string s = out.str();
  CHECK(s.find("0,post,0,0,-1,posted") != std::string::npos);
  CHECK(s.find("0,arrival,0,0,1,chunk_complete") != std::string::npos);
}
