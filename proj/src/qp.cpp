#include "sdr/qp.hpp"

#include <algorithm>
#include <cstring>
#include <string>

namespace sdr {

void QpConfig::validate() const {
  imm_split.validate();
  if (mtu_bytes == 0) throw std::invalid_argument("mtu_bytes must be > 0");
  if (chunk_size_packets == 0) throw std::invalid_argument("chunk_size_packets must be >= 1");
  if (generations == 0) throw std::invalid_argument("generations must be >= 1");
  if (num_channels == 0) throw std::invalid_argument("num_channels must be >= 1");
  if (max_msg_size_bytes == 0) throw std::invalid_argument("max_msg_size_bytes must be > 0");
  if (max_msg_size_bytes > imm_split.max_packets() * mtu_bytes) {
    throw std::invalid_argument("max_msg_size_bytes exceeds 2^offset_bits * mtu_bytes");
  }
}

std::uint64_t MessageDescriptor::chunk_packets(std::uint64_t chunk) const {
  const std::uint64_t first = chunk * chunk_size_packets;
  return std::min<std::uint64_t>(chunk_size_packets, total_packets - first);
}

const char* to_string(ArrivalAction a) {
  switch (a) {
    case ArrivalAction::kAccepted: return "accepted";
    case ArrivalAction::kDuplicate: return "duplicate";
    case ArrivalAction::kDiscardedNull: return "discard_null";
    case ArrivalAction::kDiscardedGeneration: return "discard_generation";
    case ArrivalAction::kDiscardedInvalid: return "discard_invalid";
  }
  return "?";
}

Payload make_payload(std::span<const std::byte> data) {
  auto bytes = std::make_shared<const std::vector<std::byte>>(data.begin(), data.end());
  return Payload{std::move(bytes), 0, data.size()};
}

Payload phantom_payload(std::size_t length) { return Payload{nullptr, 0, length}; }

// ---------------------------------------------------------------------------
// Receive side

RecvQp::RecvQp(QpConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  slots_.resize(cfg_.max_inflight_msgs());
}

void RecvQp::trace(const char* event, std::uint32_t msg_id, std::uint32_t gen, std::int64_t off,
                   const char* action) const {
  if (tracer_) tracer_->record(event, msg_id, gen, off, action);
}

RecvHandle RecvQp::recv_post(std::span<std::byte> buffer, bool user_imm_expected) {
  if (buffer.empty()) throw std::invalid_argument("recv_post: empty buffer");
  return post(buffer, buffer.size(), user_imm_expected);
}

RecvHandle RecvQp::recv_post_phantom(std::uint64_t bytes, bool user_imm_expected) {
  if (bytes == 0) throw std::invalid_argument("recv_post: empty buffer");
  return post({}, bytes, user_imm_expected);
}

RecvHandle RecvQp::post(std::span<std::byte> buffer, std::uint64_t bytes, bool user_imm_expected) {
  if (bytes > cfg_.max_msg_size_bytes) {
    throw std::invalid_argument("recv_post: buffer larger than max_msg_size_bytes");
  }
  Slot& slot = slots_[next_msg_id_];
  if (slot.active) {
    throw BackpressureError("recv_post: message slot " + std::to_string(next_msg_id_) + " still posted");
  }
  auto d = std::make_shared<MessageDescriptor>();
  d->msg_id = next_msg_id_;
  d->generation = slot.generation;
  d->total_packets = cfg_.packets_for(bytes);
  d->chunk_size_packets = cfg_.chunk_size_packets;
  d->packet_bitmap = Bitmap(d->total_packets);
  d->chunk_bitmap = Bitmap(cfg_.chunks_for_packets(d->total_packets));
  d->chunk_fill.assign(d->chunk_bitmap.size(), 0);
  d->user_imm_expected = user_imm_expected;
  d->buffer = buffer;
  d->buffer_bytes = bytes;
  d->state = DescriptorState::kPosted;
  slot.active = d;
  ++posted_;
  next_msg_id_ = (next_msg_id_ + 1) % cfg_.max_inflight_msgs();

  trace("post", d->msg_id, d->generation, -1, "posted");
  if (cts_sink_) cts_sink_(ClearToSend{d->msg_id, d->generation, bytes});
  return RecvHandle(std::move(d));
}

ArrivalResult RecvQp::on_packet_arrival(const Packet& pkt) {
  const TransportImmediate imm = decode_immediate(pkt.immediate, cfg_.imm_split);
  ArrivalResult r;
  r.msg_id = imm.msg_id;
  r.packet_offset = imm.packet_offset;

  auto reject = [&](ArrivalAction a, std::uint64_t& counter) {
    ++counter;
    r.action = a;
    trace("arrival", imm.msg_id, pkt.generation, imm.packet_offset, to_string(a));
    return r;
  };

  if (imm.msg_id >= slots_.size()) return reject(ArrivalAction::kDiscardedInvalid, stats_.discarded_invalid);
  Slot& slot = slots_[imm.msg_id];
  if (!slot.active) return reject(ArrivalAction::kDiscardedNull, stats_.discarded_null);
  MessageDescriptor& d = *slot.active;
  if (pkt.generation != d.generation % cfg_.generations) {
    return reject(ArrivalAction::kDiscardedGeneration, stats_.discarded_generation);
  }
  const std::uint64_t byte_off = std::uint64_t{imm.packet_offset} * cfg_.mtu_bytes;
  const std::uint64_t expected_dest = std::uint64_t{imm.msg_id} * cfg_.max_msg_size_bytes + byte_off;
  if (imm.packet_offset >= d.total_packets || pkt.dest_offset_bytes != expected_dest ||
      byte_off + pkt.payload_len > d.buffer_bytes) {
    return reject(ArrivalAction::kDiscardedInvalid, stats_.discarded_invalid);
  }

  // Payload lands in the user buffer regardless of duplicate status, as the
  // NIC would; identical bytes on a replay.
  const auto src = pkt.payload.view();
  if (!src.empty() && !d.buffer.empty()) std::memcpy(d.buffer.data() + byte_off, src.data(), std::min<std::size_t>(src.size(), pkt.payload_len));

  if (d.user_imm_expected && cfg_.imm_split.frag_bits > 0 && imm.packet_offset < cfg_.imm_split.fragments_per_imm()) {
    d.imm_frags[imm.packet_offset] = static_cast<std::uint8_t>(imm.imm_frag);
    d.imm_frags_received |= std::uint32_t{1} << imm.packet_offset;
  }

  if (!d.packet_bitmap.set(imm.packet_offset)) {
    ++stats_.duplicates;
    r.action = ArrivalAction::kDuplicate;
    trace("arrival", imm.msg_id, pkt.generation, imm.packet_offset, "duplicate");
    return r;
  }
  ++stats_.accepted;
  r.action = ArrivalAction::kAccepted;
  const std::uint64_t chunk = imm.packet_offset / cfg_.chunk_size_packets;
  if (++d.chunk_fill[chunk] == d.chunk_packets(chunk)) {
    d.chunk_bitmap.set(chunk);
    r.chunk_completed = chunk;
    trace("arrival", imm.msg_id, pkt.generation, imm.packet_offset, "chunk_complete");
  } else {
    trace("arrival", imm.msg_id, pkt.generation, imm.packet_offset, "accepted");
  }
  return r;
}

const MessageDescriptor& RecvQp::descriptor(const RecvHandle& h) const {
  if (!h.desc_) throw ProtocolError("invalid receive handle");
  return *h.desc_;
}

Bitmap RecvQp::recv_bitmap_get(const RecvHandle& h) const {
  if (!h.desc_ || h.desc_->state == DescriptorState::kNulled) {
    throw ProtocolError("recv_bitmap_get: handle released");
  }
  return h.desc_->chunk_bitmap;
}

bool RecvQp::chunk_received(const RecvHandle& h, std::uint64_t chunk) const {
  if (!h.desc_ || h.desc_->state == DescriptorState::kNulled) {
    throw ProtocolError("chunk_received: handle released");
  }
  return h.desc_->chunk_bitmap.test(chunk);
}

std::optional<std::uint32_t> RecvQp::recv_imm_get(const RecvHandle& h) const {
  const MessageDescriptor& d = descriptor(h);
  if (!d.user_imm_expected) throw ProtocolError("recv_imm_get: message posted without user immediate");
  const unsigned nfrag = cfg_.imm_split.fragments_per_imm();
  if (nfrag == 0) throw ProtocolError("recv_imm_get: immediate split has no fragment field");
  const std::uint32_t all = nfrag >= 32 ? ~std::uint32_t{0} : (std::uint32_t{1} << nfrag) - 1;
  if ((d.imm_frags_received & all) != all) return std::nullopt;
  std::uint32_t value = 0;
  for (unsigned f = 0; f < nfrag; ++f) value |= std::uint32_t{d.imm_frags[f]} << (f * cfg_.imm_split.frag_bits);
  return value;
}

void RecvQp::recv_complete(RecvHandle& h) {
  if (!h.desc_ || h.desc_->state != DescriptorState::kPosted) {
    throw ProtocolError("recv_complete: handle is not posted");
  }
  MessageDescriptor& d = *h.desc_;
  d.state = DescriptorState::kCompleted;
  Slot& slot = slots_[d.msg_id];
  slot.active.reset();
  ++slot.generation;
  --posted_;
  trace("complete", d.msg_id, d.generation, -1, "nulled");
}

void RecvQp::recv_release(RecvHandle& h) {
  if (!h.desc_) return;
  if (h.desc_->state == DescriptorState::kPosted) recv_complete(h);
  h.desc_->state = DescriptorState::kNulled;
  h.desc_.reset();
}

// ---------------------------------------------------------------------------
// Send side

SendQp::SendQp(QpConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void SendQp::on_cts(const ClearToSend& cts) { cts_.push_back(cts); }

SendHandle SendQp::match(SendMode mode, std::optional<std::uint32_t> user_imm) {
  if (cts_.empty()) throw ProtocolError("send: no clear-to-send for the next receive in order");
  const ClearToSend cts = cts_.front();
  cts_.pop_front();
  auto st = std::make_shared<SendHandle::State>();
  st->msg_id = cts.msg_id;
  st->generation = cts.generation;
  st->remote_bytes = cts.buffer_bytes;
  st->mode = mode;
  st->user_imm = user_imm;
  st->stream_open = mode == SendMode::kStreaming;
  return SendHandle(std::move(st));
}

void SendQp::emit(SendHandle::State& st, std::uint64_t first_packet, const Payload& data) {
  const std::uint64_t npackets = cfg_.packets_for(data.length);
  const unsigned nfrag = cfg_.imm_split.fragments_per_imm();
  const std::uint32_t frag_mask = (std::uint32_t{1} << cfg_.imm_split.frag_bits) - 1;
  for (std::uint64_t i = 0; i < npackets; ++i) {
    const std::uint64_t pidx = first_packet + i;
    const std::uint64_t off = i * cfg_.mtu_bytes;
    const std::uint64_t len = std::min<std::uint64_t>(cfg_.mtu_bytes, data.length - off);
    TransportImmediate imm{st.msg_id, static_cast<std::uint32_t>(pidx), 0};
    if (st.user_imm && pidx < nfrag) imm.imm_frag = (*st.user_imm >> (pidx * cfg_.imm_split.frag_bits)) & frag_mask;

    Packet pkt;
    pkt.payload_len = static_cast<std::uint32_t>(len);
    pkt.immediate = encode_immediate(imm, cfg_.imm_split);
    pkt.dest_offset_bytes = std::uint64_t{st.msg_id} * cfg_.max_msg_size_bytes + pidx * cfg_.mtu_bytes;
    pkt.channel_qp_index = static_cast<std::uint32_t>(pidx % cfg_.num_channels);
    pkt.generation = st.generation % cfg_.generations;
    pkt.payload = data.slice(off, len);
    ++st.injected_packets;
    ++packets_injected_;
    if (tracer_) tracer_->record("inject", st.msg_id, st.generation, static_cast<std::int64_t>(pidx), "sent");
    if (sink_) sink_(std::move(pkt));
  }
}

SendHandle SendQp::send_one_shot(Payload data, std::optional<std::uint32_t> user_imm) {
  if (data.length == 0) throw std::invalid_argument("send_one_shot: empty message");
  if (data.length > cfg_.max_msg_size_bytes) throw std::invalid_argument("send_one_shot: message exceeds max_msg_size");
  if (user_imm) {
    const unsigned nfrag = cfg_.imm_split.fragments_per_imm();
    if (nfrag == 0 || cfg_.packets_for(data.length) < nfrag) {
      throw std::invalid_argument("send_one_shot: user immediate needs at least " + std::to_string(nfrag) +
                                  " packets");
    }
  }
  if (!cts_.empty() && data.length > cts_.front().buffer_bytes) {
    throw std::invalid_argument("send_one_shot: message larger than the matched receive buffer");
  }
  SendHandle h = match(SendMode::kOneShot, user_imm);
  emit(*h.st_, 0, data);
  h.st_->complete = true;
  return h;
}

SendHandle SendQp::send_one_shot(std::span<const std::byte> data, std::optional<std::uint32_t> user_imm) {
  return send_one_shot(make_payload(data), user_imm);
}

SendHandle SendQp::send_stream_start(std::optional<std::uint32_t> user_imm) {
  if (user_imm && cfg_.imm_split.fragments_per_imm() == 0) {
    throw std::invalid_argument("send_stream_start: immediate split has no fragment field");
  }
  return match(SendMode::kStreaming, user_imm);
}

void SendQp::send_stream_continue(SendHandle& h, std::uint64_t remote_offset, Payload data) {
  if (!h.st_ || h.st_->mode != SendMode::kStreaming) throw ProtocolError("send_stream_continue: not a stream");
  if (!h.st_->stream_open) throw ProtocolError("send_stream_continue: stream already ended");
  if (remote_offset % cfg_.mtu_bytes != 0) throw std::invalid_argument("send_stream_continue: offset not MTU-aligned");
  if (remote_offset + data.length > h.st_->remote_bytes) {
    throw std::invalid_argument("send_stream_continue: write past the end of the remote buffer");
  }
  emit(*h.st_, remote_offset / cfg_.mtu_bytes, data);
}

void SendQp::send_stream_continue(SendHandle& h, std::uint64_t remote_offset, std::span<const std::byte> data) {
  send_stream_continue(h, remote_offset, make_payload(data));
}

void SendQp::send_stream_end(SendHandle& h) {
  if (!h.st_ || h.st_->mode != SendMode::kStreaming) throw ProtocolError("send_stream_end: not a stream");
  if (!h.st_->stream_open) throw ProtocolError("send_stream_end: stream already ended");
  h.st_->stream_open = false;
  h.st_->complete = true;
}

}  // namespace sdr
