#include "sdr/ec.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>

namespace sdr {

EcLayout EcLayout::make(std::uint64_t message_bytes, std::uint64_t chunk_bytes, const EcConfig& code) {
  code.validate();
  if (message_bytes == 0) throw std::invalid_argument("EcLayout: empty message");
  if (chunk_bytes == 0) throw std::invalid_argument("EcLayout: zero chunk size");
  EcLayout l;
  l.code = code;
  l.message_bytes = message_bytes;
  l.chunk_bytes = chunk_bytes;
  l.chunks = (message_bytes + chunk_bytes - 1) / chunk_bytes;
  l.submessages = static_cast<std::uint32_t>((l.chunks + code.k - 1) / code.k);
  return l;
}

EcGeometry EcLayout::geometry(std::uint32_t s) const {
  const std::uint64_t left = chunks - first_chunk(s);
  return geometry_for(static_cast<std::uint32_t>(std::min<std::uint64_t>(code.k, left)), code);
}

std::uint64_t EcLayout::data_bytes(std::uint32_t s) const {
  return std::min(message_bytes, data_offset(s + 1)) - data_offset(s);
}

std::uint64_t EcLayout::parity_chunks() const {
  std::uint64_t n = 0;
  for (std::uint32_t s = 0; s < submessages; ++s) n += geometry(s).parity_blocks;
  return n;
}

EcTimers EcTimers::defaults(const EcLayout& layout, const ChannelParams& ch) {
  const double t_inj = ch.serialization_seconds(layout.chunk_bytes);
  const std::uint64_t m = layout.chunks;
  const std::uint64_t parity = (m * layout.code.m + layout.code.k - 1) / layout.code.k;
  EcTimers t;
  t.fto = from_seconds(static_cast<double>(m + parity) * t_inj + ch.beta * to_seconds(ch.rtt));
  t.global_timeout = 4 * t.fto + 4 * ch.rtt;
  return t;
}

namespace {

// Data blocks of submessage s, the last one zero-padded to a full chunk.
std::vector<std::vector<std::byte>> padded_blocks(const EcLayout& l, std::uint32_t s,
                                                  std::span<const std::byte> message) {
  const auto g = l.geometry(s);
  std::vector<std::vector<std::byte>> blocks(g.data_blocks, std::vector<std::byte>(l.chunk_bytes));
  for (std::uint32_t j = 0; j < g.data_blocks; ++j) {
    const std::uint64_t off = l.data_offset(s) + j * l.chunk_bytes;
    const std::uint64_t len = std::min(l.chunk_bytes, l.message_bytes - off);
    std::memcpy(blocks[j].data(), message.data() + off, len);
  }
  return blocks;
}

}  // namespace

// ---------------------------------------------------------------------------

EcSender::EcSender(Link& link, EcLayout layout, EcTimers timers, SrConfig fallback, Payload message,
                   Duration encode_cost_per_byte)
    : link_(link),
      layout_(layout),
      timers_(timers),
      sr_cfg_(fallback),
      message_(std::move(message)),
      encode_cost_(encode_cost_per_byte) {
  if (message_.length != layout_.message_bytes) throw std::invalid_argument("EcSender: message size mismatch");
  if (encode_cost_ < Duration::zero()) throw std::invalid_argument("EcSender: negative encode cost");
}

EcSender::~EcSender() {
  for (auto id : pending_parity_) link_.sim().cancel(id);
  if (global_timer_) link_.sim().cancel(*global_timer_);
}

void EcSender::start() {
  if (started_at_) throw ProtocolError("EcSender: already started");
  if (link_.sender().pending_cts() < 2ULL * layout_.submessages) {
    throw ProtocolError("EcSender: receiver has not posted every submessage");
  }
  started_at_ = link_.sim().now();
  Duration encode_done{0};
  for (std::uint32_t s = 0; s < layout_.submessages; ++s) {
    auto d = link_.sender().send_stream_start();
    link_.sender().send_stream_continue(d, 0, message_.slice(layout_.data_offset(s), layout_.data_bytes(s)));
    data_chunks_ += layout_.geometry(s).data_blocks;
    data_.push_back(d);
    parity_.push_back(link_.sender().send_stream_start());
    encode_done += encode_cost_ * static_cast<std::int64_t>(layout_.data_bytes(s));
    if (encode_done == Duration::zero()) {
      inject_parity(s);
    } else {
      // parity leaves once the CPU has encoded it
      pending_parity_.push_back(link_.sim().schedule_after(encode_done, [this, s] { inject_parity(s); }));
    }
  }
  global_timer_ = link_.sim().schedule_after(timers_.global_timeout, [this] {
    global_timer_.reset();
    if (done()) return;
    aborted_ = true;
    if (fallback_) fallback_->abort();
    if (auto* tr = link_.tracer()) tr->record("ec", -1, -1, -1, "global_timeout");
  });
}

void EcSender::inject_parity(std::uint32_t s) {
  if (done() || aborted_) return;
  const auto g = layout_.geometry(s);
  Payload p;
  if (message_.bytes) {
    const auto blocks = padded_blocks(layout_, s, message_.view());
    std::vector<std::span<const std::byte>> views(blocks.begin(), blocks.end());
    const auto parity = ec_encode(g, views);
    auto flat = std::make_shared<std::vector<std::byte>>();
    flat->reserve(layout_.parity_bytes(s));
    for (const auto& b : parity) flat->insert(flat->end(), b.begin(), b.end());
    p = Payload{std::move(flat), 0, layout_.parity_bytes(s)};
  } else {
    p = phantom_payload(layout_.parity_bytes(s));
  }
  link_.sender().send_stream_continue(parity_[s], 0, p);
  parity_chunks_ += g.parity_blocks;
}

void EcSender::on_control(const ControlMessage& msg) {
  if (!started_at_ || done() || aborted_) return;
  if (global_timer_) {
    link_.sim().cancel(*global_timer_);
    global_timer_.reset();
  }
  if (std::holds_alternative<EcAck>(msg)) {
    finish();
  } else if (const auto* nack = std::get_if<EcNack>(&msg)) {
    if (fallback_) return;
    std::vector<SrChunkTarget> targets;
    for (auto s : nack->failed_submessages) {
      if (s >= layout_.submessages) continue;
      nacked_.push_back(s);
      const auto g = layout_.geometry(s);
      for (std::uint32_t j = 0; j < g.data_blocks; ++j) {
        const std::uint64_t off = layout_.data_offset(s) + j * layout_.chunk_bytes;
        const std::uint64_t len = std::min(layout_.chunk_bytes, layout_.message_bytes - off);
        targets.push_back({data_[s], j * layout_.chunk_bytes, message_.slice(off, len)});
      }
    }
    if (targets.empty()) return;
    if (auto* tr = link_.tracer()) tr->record("ec", -1, -1, static_cast<std::int64_t>(nacked_.size()), "fallback");
    fallback_ = std::make_unique<SrSender>(link_, sr_cfg_, std::move(targets));
    fallback_->set_on_complete([this] { finish(); });
    fallback_->start();
  } else if (const auto* ack = std::get_if<SrAck>(&msg)) {
    if (fallback_) fallback_->on_ack(*ack);
  }
}

void EcSender::finish() {
  completed_at_ = link_.sim().now();
  for (auto id : pending_parity_) link_.sim().cancel(id);
  pending_parity_.clear();
  if (fallback_) fallback_->abort();
  for (auto* hs : {&data_, &parity_})
    for (auto& h : *hs)
      if (h.stream_open()) link_.sender().send_stream_end(h);
  if (auto* tr = link_.tracer()) tr->record("ec", -1, -1, -1, "complete");
}

std::uint64_t EcSender::data_chunks_injected() const {
  return data_chunks_ + (fallback_ ? fallback_->chunks_injected() : 0);
}

std::uint64_t EcSender::retransmitted_chunks() const { return fallback_ ? fallback_->chunks_injected() : 0; }

// ---------------------------------------------------------------------------

EcReceiver::EcReceiver(Link& link, EcLayout layout, EcTimers timers, SrConfig fallback, std::span<std::byte> buffer)
    : link_(link), layout_(layout), timers_(timers), sr_cfg_(fallback), buffer_(buffer) {
  RecvQp& qp = link_.receiver();
  if (2ULL * layout_.submessages > qp.config().max_inflight_msgs()) {
    throw std::invalid_argument("EcReceiver: " + std::to_string(2ULL * layout_.submessages) +
                                " submessages exceed the QP's message slots");
  }
  if (!buffer_.empty() && buffer_.size() != layout_.message_bytes) {
    throw std::invalid_argument("EcReceiver: buffer size mismatch");
  }
  decodable_.assign(layout_.submessages, false);
  if (!buffer_.empty()) parity_buf_.resize(layout_.submessages);
  for (std::uint32_t s = 0; s < layout_.submessages; ++s) {
    if (buffer_.empty()) {
      data_.push_back(qp.recv_post_phantom(layout_.data_bytes(s)));
      parity_.push_back(qp.recv_post_phantom(layout_.parity_bytes(s)));
    } else {
      data_.push_back(qp.recv_post(buffer_.subspan(layout_.data_offset(s), layout_.data_bytes(s))));
      parity_buf_[s].assign(layout_.parity_bytes(s), std::byte{0});
      parity_.push_back(qp.recv_post(parity_buf_[s]));
    }
  }
}

EcReceiver::~EcReceiver() { stop(); }

void EcReceiver::start() {
  if (poll_timer_) return;
  poll_timer_ = link_.sim().schedule_after(sr_cfg_.ack_poll_period, [this] {
    poll_timer_.reset();
    poll();
  });
}

void EcReceiver::stop() {
  if (poll_timer_) link_.sim().cancel(*poll_timer_);
  poll_timer_.reset();
  if (fto_timer_) link_.sim().cancel(*fto_timer_);
  fto_timer_.reset();
  if (fallback_) fallback_->stop();
}

void EcReceiver::on_arrival(const ArrivalResult& r) {
  if (!r.chunk_completed || fto_armed() || done_) return;
  fto_timer_ = link_.sim().schedule_after(timers_.fto, [this] {
    fto_timer_.reset();
    fto_fired_ = true;
    on_fto();
  });
  if (auto* tr = link_.tracer()) tr->record("ec", r.msg_id, -1, r.packet_offset, "fto_armed");
}

bool EcReceiver::decodable(std::uint32_t s) const {
  if (decodable_[s]) return true;
  const auto g = layout_.geometry(s);
  const auto& qp = link_.receiver();
  std::vector<bool> present(g.total());
  for (std::uint32_t j = 0; j < g.data_blocks; ++j) present[j] = qp.chunk_received(data_[s], j);
  for (std::uint32_t i = 0; i < g.parity_blocks; ++i) present[g.data_blocks + i] = qp.chunk_received(parity_[s], i);
  return ec_decodable(g, present);
}

std::vector<std::uint32_t> EcReceiver::undecodable() const {
  std::vector<std::uint32_t> out;
  for (std::uint32_t s = 0; s < layout_.submessages; ++s)
    if (!decodable(s)) out.push_back(s);
  return out;
}

void EcReceiver::decode(std::uint32_t s) {
  if (buffer_.empty()) return;
  const auto g = layout_.geometry(s);
  const auto& qp = link_.receiver();
  std::vector<std::vector<std::byte>> blocks(g.data_blocks);
  std::vector<IndexedBlock> present;
  std::vector<std::uint32_t> missing;
  for (std::uint32_t j = 0; j < g.data_blocks; ++j) {
    if (!qp.chunk_received(data_[s], j)) {
      missing.push_back(j);
      continue;
    }
    const std::uint64_t off = layout_.data_offset(s) + j * layout_.chunk_bytes;
    const std::uint64_t len = std::min(layout_.chunk_bytes, layout_.message_bytes - off);
    blocks[j].assign(layout_.chunk_bytes, std::byte{0});
    std::memcpy(blocks[j].data(), buffer_.data() + off, len);
    present.push_back({j, blocks[j]});
  }
  if (missing.empty()) return;
  for (std::uint32_t i = 0; i < g.parity_blocks; ++i) {
    if (!qp.chunk_received(parity_[s], i)) continue;
    present.push_back({g.data_blocks + i, std::span<const std::byte>(parity_buf_[s]).subspan(i * layout_.chunk_bytes,
                                                                                            layout_.chunk_bytes)});
  }
  const auto out = ec_decode(g, present);
  if (!out) throw std::logic_error("EcReceiver: decodable submessage failed to decode");
  for (auto j : missing) {
    const std::uint64_t off = layout_.data_offset(s) + j * layout_.chunk_bytes;
    const std::uint64_t len = std::min(layout_.chunk_bytes, layout_.message_bytes - off);
    std::memcpy(buffer_.data() + off, (*out)[j].data(), len);
  }
}

namespace {
void complete_if_posted(RecvQp& qp, RecvHandle& h) {
  if (h.state() == DescriptorState::kPosted) qp.recv_complete(h);
}
}  // namespace

void EcReceiver::complete_all() {
  for (std::uint32_t s = 0; s < layout_.submessages; ++s) {
    complete_if_posted(link_.receiver(), data_[s]);
    complete_if_posted(link_.receiver(), parity_[s]);
  }
}

void EcReceiver::poll() {
  tick();
  start();
}

std::optional<ControlMessage> EcReceiver::tick() {
  if (done_) {
    if (!acked_) return std::nullopt;
    link_.send_to_sender(EcAck{});
    return EcAck{};
  }
  if (fallback_) {
    // NACK lost on the way? resend while the retransmissions do not show up
    const std::uint64_t seen = fallback_->bitmap().count();
    if (seen != fallback_seen_) {
      fallback_seen_ = seen;
      last_nack_ = link_.sim().now();
      return std::nullopt;
    }
    if (link_.sim().now() - last_nack_ < link_.config().channel.rtt + sr_cfg_.ack_poll_period) return std::nullopt;
    last_nack_ = link_.sim().now();
    link_.send_to_sender(EcNack{failed_});
    return EcNack{failed_};
  }
  bool all = true;
  for (std::uint32_t s = 0; s < layout_.submessages; ++s) {
    if (!decodable_[s]) decodable_[s] = decodable(s);
    all = all && decodable_[s];
  }
  if (!all) return std::nullopt;
  for (std::uint32_t s = 0; s < layout_.submessages; ++s) decode(s);
  complete_all();
  if (fto_timer_) link_.sim().cancel(*fto_timer_);
  fto_timer_.reset();
  done_ = acked_ = true;
  if (auto* tr = link_.tracer()) tr->record("ec", -1, -1, -1, "ack");
  link_.send_to_sender(EcAck{});
  return EcAck{};
}

void EcReceiver::on_fto() {
  if (done_ || fallback_) return;
  for (std::uint32_t s = 0; s < layout_.submessages; ++s)
    if (!decodable_[s]) decodable_[s] = decodable(s);
  failed_ = undecodable();
  if (failed_.empty()) {
    tick();
    return;
  }
  RecvQp& qp = link_.receiver();
  std::vector<SrChunkSource> sources;
  std::size_t f = 0;
  for (std::uint32_t s = 0; s < layout_.submessages; ++s) {
    if (f < failed_.size() && failed_[f] == s) {
      ++f;
      complete_if_posted(qp, parity_[s]);
      for (std::uint32_t j = 0; j < layout_.geometry(s).data_blocks; ++j) sources.push_back({data_[s], j});
      continue;
    }
    decode(s);
    complete_if_posted(qp, data_[s]);
    complete_if_posted(qp, parity_[s]);
  }
  if (auto* tr = link_.tracer()) tr->record("ec", -1, -1, static_cast<std::int64_t>(failed_.size()), "nack");
  fallback_ = std::make_unique<SrReceiver>(link_, sr_cfg_, std::move(sources));
  fallback_seen_ = fallback_->bitmap().count();
  last_nack_ = link_.sim().now();
  fallback_->set_on_all_received([this] {
    for (auto s : failed_) complete_if_posted(link_.receiver(), data_[s]);
    done_ = true;
  });
  link_.send_to_sender(EcNack{failed_});
  fallback_->start();
}

// ---------------------------------------------------------------------------

namespace {

TransferResult run_ec(const EcTransferOptions& opt, std::span<const std::byte> message, std::uint64_t bytes,
                      bool carry) {
  Simulator sim;
  std::optional<Tracer> tracer;
  if (opt.tracer) tracer = opt.tracer->with_clock([&sim] { return sim.now(); });
  Link link(sim, opt.link, tracer ? &*tracer : nullptr);
  if (opt.data_drop_filter) link.data_channel().set_drop_filter(opt.data_drop_filter);
  const SrConfig sr = resolve_sr_config(opt);
  const EcLayout layout = EcLayout::make(bytes, link.config().qp.chunk_bytes(), opt.ec);
  const EcTimers timers = opt.timers ? *opt.timers : EcTimers::defaults(layout, opt.link.channel);

  TransferResult res;
  if (carry) res.received.assign(bytes, std::byte{0});
  EcReceiver receiver(link, layout, timers, sr, res.received);
  sim.run();  // CTS for every post

  EcSender sender(link, layout, timers, sr, carry ? make_payload(message) : phantom_payload(bytes),
                  opt.encode_cost_per_byte);
  link.set_sender_control_handler([&](const ControlMessage& m) {
    sender.on_control(m);
    if (sender.done()) receiver.stop();
  });
  link.set_arrival_listener([&](const ArrivalResult& r) { receiver.on_arrival(r); });

  bool expired = false;
  if (opt.deadline > Duration::zero()) sim.schedule_after(opt.deadline, [&] { expired = true; });
  sender.start();
  receiver.start();
  while (!sender.done() && !sender.aborted() && !expired && sim.step()) {
  }
  if (sender.aborted()) throw TimeoutError("ec transfer aborted: global timeout exceeded");
  if (!sender.done()) throw TimeoutError("ec transfer did not complete before the deadline");

  res.completion = *sender.completed_at() - *sender.started_at();
  res.fallback = sender.fallback();
  res.data_chunks_injected = sender.data_chunks_injected();
  res.parity_chunks_injected = sender.parity_chunks_injected();
  res.retransmitted_chunks = sender.retransmitted_chunks();
  res.packets_sent = link.data_channel().transmitted();
  res.packets_dropped = link.data_channel().dropped();
  res.control_messages = link.control_sent();
  receiver.stop();
  sim.clear();
  return res;
}

}  // namespace

TransferResult run_ec_transfer(const EcTransferOptions& opt, std::span<const std::byte> message) {
  return run_ec(opt, message, message.size(), true);
}

TransferResult run_ec_transfer(const EcTransferOptions& opt, std::uint64_t message_bytes) {
  return run_ec(opt, {}, message_bytes, false);
}

}  // namespace sdr
