#include "sdr/sr.hpp"

#include <algorithm>
#include <stdexcept>

namespace sdr {

const char* to_string(SrVariant v) { return v == SrVariant::kRto ? "sr_rto" : "sr_nack"; }

SrConfig SrConfig::defaults(const ChannelParams& ch, std::uint64_t chunk_bytes, SrVariant variant) {
  SrConfig c;
  c.variant = variant;
  c.rto = variant == SrVariant::kRto ? ch.rto() : ch.rtt;
  const Duration four_inj = from_seconds(4.0 * ch.serialization_seconds(chunk_bytes));
  c.ack_poll_period = std::max(ch.rtt / 8, four_inj);
  if (c.ack_poll_period <= Duration::zero()) c.ack_poll_period = Duration(1);
  return c;
}

void SrConfig::validate() const {
  if (rto <= Duration::zero()) throw std::invalid_argument("SrConfig.rto must be positive");
  if (ack_poll_period <= Duration::zero()) throw std::invalid_argument("SrConfig.ack_poll_period must be positive");
}

SrAck make_sr_ack(const Bitmap& chunks, std::size_t window_bytes) {
  SrAck ack;
  const std::size_t first = chunks.first_clear();
  ack.cumulative = static_cast<std::int32_t>(first) - 1;
  if (first >= chunks.size()) return ack;
  ack.selective.assign(window_bytes, 0);
  for (std::size_t i = 0; i < window_bytes * 8; ++i) {
    const std::size_t c = first + i;
    if (c >= chunks.size()) break;
    if (chunks.test(c)) ack.selective[i / 8] |= static_cast<std::uint8_t>(1U << (i % 8));
  }
  // trailing zero bytes carry nothing
  while (!ack.selective.empty() && ack.selective.back() == 0) ack.selective.pop_back();
  return ack;
}

std::optional<SrAck> sr_receiver_tick(const RecvQp& qp, const RecvHandle& h, const SrConfig& cfg) {
  if (!h.valid() || h.state() == DescriptorState::kNulled) return std::nullopt;
  const Bitmap bm = qp.recv_bitmap_get(h);
  if (bm.none()) return std::nullopt;
  return make_sr_ack(bm, cfg.selective_window_bytes);
}

// ---------------------------------------------------------------------------

SrSender::SrSender(Link& link, SrConfig cfg, std::vector<SrChunkTarget> chunks)
    : link_(link),
      cfg_(cfg),
      chunks_(std::move(chunks)),
      acked_(chunks_.size(), false),
      timers_(chunks_.size()),
      injections_(chunks_.size(), 0) {
  cfg_.validate();
  if (chunks_.empty()) throw std::invalid_argument("SrSender: no chunks");
}

SrSender::~SrSender() { abort(); }

void SrSender::start() {
  if (started_at_) throw ProtocolError("SrSender: already started");
  started_at_ = link_.sim().now();
  for (std::size_t c = 0; c < chunks_.size(); ++c) inject(c);
}

void SrSender::inject(std::size_t c) {
  auto& t = chunks_[c];
  const bool retx = injections_[c] > 0;
  link_.sender().send_stream_continue(t.stream, t.remote_offset, t.data);
  ++injections_[c];
  ++chunks_injected_;
  if (retx) {
    ++retransmissions_;
    if (auto* tr = link_.tracer()) {
      tr->record("sr", t.stream.msg_id(), t.stream.generation(),
                 static_cast<std::int64_t>(t.remote_offset / link_.config().qp.mtu_bytes), "retransmit");
    }
  }
  if (on_inject_) on_inject_(c, retx);
  // timer runs from the end of this chunk's injection
  const SimTime fire = std::max(link_.data_channel().busy_until(), link_.sim().now()) + cfg_.rto;
  timers_[c] = link_.sim().schedule_at(fire, [this, c] {
    timers_[c].reset();
    on_timeout(c);
  });
}

void SrSender::on_timeout(std::size_t c) {
  if (acked_[c] || done()) return;
  inject(c);
}

void SrSender::mark_acked(std::size_t c) {
  if (acked_[c]) return;
  acked_[c] = true;
  ++acked_count_;
  if (timers_[c]) {
    link_.sim().cancel(*timers_[c]);
    timers_[c].reset();
  }
}

void SrSender::on_ack(const SrAck& ack) {
  if (!started_at_ || done()) return;
  const std::size_t n = chunks_.size();
  const std::size_t cum_end = std::min<std::size_t>(n, static_cast<std::size_t>(std::int64_t{ack.cumulative} + 1));
  for (std::size_t c = first_unacked_; c < cum_end; ++c) mark_acked(c);
  const std::size_t base = cum_end;
  for (std::size_t i = 0; i < ack.selective.size() * 8; ++i) {
    const std::size_t c = base + i;
    if (c >= n) break;
    if ((ack.selective[i / 8] >> (i % 8)) & 1U) mark_acked(c);
  }
  while (first_unacked_ < n && acked_[first_unacked_]) ++first_unacked_;
  if (acked_count_ == n) {
    completed_at_ = link_.sim().now();
    if (auto* tr = link_.tracer()) tr->record("sr", -1, -1, -1, "complete");
    if (on_complete_) on_complete_();
  }
}

void SrSender::abort() {
  for (auto& t : timers_) {
    if (t) link_.sim().cancel(*t);
    t.reset();
  }
}

// ---------------------------------------------------------------------------

SrReceiver::SrReceiver(Link& link, SrConfig cfg, std::vector<SrChunkSource> chunks)
    : link_(link), cfg_(cfg), chunks_(std::move(chunks)) {
  cfg_.validate();
  if (chunks_.empty()) throw std::invalid_argument("SrReceiver: no chunks");
}

SrReceiver::~SrReceiver() { stop(); }

Bitmap SrReceiver::bitmap() const {
  Bitmap bm(chunks_.size());
  const RecvQp& qp = link_.receiver();
  for (std::size_t i = 0; i < chunks_.size(); ++i) {
    if (qp.chunk_received(chunks_[i].handle, chunks_[i].chunk)) bm.set(i);
  }
  return bm;
}

void SrReceiver::start() {
  if (timer_) return;
  timer_ = link_.sim().schedule_after(cfg_.ack_poll_period, [this] {
    timer_.reset();
    poll();
  });
}

void SrReceiver::stop() {
  if (timer_) link_.sim().cancel(*timer_);
  timer_.reset();
}

void SrReceiver::poll() {
  const Bitmap bm = bitmap();
  if (!bm.none()) {
    SrAck ack = make_sr_ack(bm, cfg_.selective_window_bytes);
    if (log_acks_) ack_log_.emplace_back(ack, bm);
    ++acks_sent_;
    if (auto* tr = link_.tracer()) tr->record("sr", -1, -1, ack.cumulative, "ack");
    link_.send_to_sender(std::move(ack));
    if (!all_received_ && bm.all()) {
      all_received_ = true;
      if (on_all_received_) on_all_received_();
    }
  }
  start();
}

// ---------------------------------------------------------------------------

SrConfig resolve_sr_config(const TransferOptions& opt) {
  SrConfig c = opt.sr;
  const SrConfig d = SrConfig::defaults(opt.link.channel, opt.link.qp.chunk_bytes(), c.variant);
  if (c.rto <= Duration::zero()) c.rto = d.rto;
  if (c.ack_poll_period <= Duration::zero()) c.ack_poll_period = d.ack_poll_period;
  return c;
}

namespace {

TransferResult run_sr(const TransferOptions& opt, std::span<const std::byte> message, std::uint64_t bytes,
                      bool carry) {
  if (bytes == 0) throw std::invalid_argument("run_sr_transfer: empty message");
  Simulator sim;
  std::optional<Tracer> tracer;
  if (opt.tracer) tracer = opt.tracer->with_clock([&sim] { return sim.now(); });
  Link link(sim, opt.link, tracer ? &*tracer : nullptr);
  if (opt.data_drop_filter) link.data_channel().set_drop_filter(opt.data_drop_filter);
  const SrConfig cfg = resolve_sr_config(opt);
  const QpConfig& qp = link.config().qp;

  TransferResult res;
  if (carry) res.received.assign(bytes, std::byte{0});
  RecvHandle rh = carry ? link.receiver().recv_post(res.received) : link.receiver().recv_post_phantom(bytes);
  sim.run();  // CTS reaches the sender

  SendHandle sh = link.sender().send_stream_start();
  const Payload base = carry ? make_payload(message) : phantom_payload(bytes);
  const std::uint64_t cb = qp.chunk_bytes();
  const std::uint64_t nchunks = (bytes + cb - 1) / cb;
  std::vector<SrChunkTarget> targets;
  std::vector<SrChunkSource> sources;
  targets.reserve(nchunks);
  sources.reserve(nchunks);
  for (std::uint64_t c = 0; c < nchunks; ++c) {
    const std::uint64_t off = c * cb;
    targets.push_back({sh, off, base.slice(off, std::min(cb, bytes - off))});
    sources.push_back({rh, c});
  }

  SrSender sender(link, cfg, std::move(targets));
  SrReceiver receiver(link, cfg, std::move(sources));
  receiver.set_log_acks(opt.log_acks);
  receiver.set_on_all_received([&] { link.receiver().recv_complete(rh); });
  link.set_sender_control_handler([&](const ControlMessage& m) {
    if (const auto* ack = std::get_if<SrAck>(&m)) sender.on_ack(*ack);
  });
  sender.set_on_complete([&] {
    receiver.stop();
    link.sender().send_stream_end(sh);
  });

  bool expired = false;
  if (opt.deadline > Duration::zero()) sim.schedule_after(opt.deadline, [&] { expired = true; });
  sender.start();
  receiver.start();
  while (!sender.done() && !expired && sim.step()) {
  }
  if (!sender.done()) throw TimeoutError("sr transfer did not complete before the deadline");

  res.completion = *sender.completed_at() - *sender.started_at();
  res.data_chunks_injected = sender.chunks_injected();
  res.retransmitted_chunks = sender.retransmissions();
  res.packets_sent = link.data_channel().transmitted();
  res.packets_dropped = link.data_channel().dropped();
  res.control_messages = link.control_sent();
  res.ack_log = receiver.ack_log();
  sim.clear();
  return res;
}

}  // namespace

TransferResult run_sr_transfer(const TransferOptions& opt, std::span<const std::byte> message) {
  return run_sr(opt, message, message.size(), true);
}

TransferResult run_sr_transfer(const TransferOptions& opt, std::uint64_t message_bytes) {
  return run_sr(opt, {}, message_bytes, false);
}

}  // namespace sdr
