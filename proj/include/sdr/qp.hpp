#pragma once

// SDR queue pair: send packetization, receive-side per-packet -> chunk bitmap
// coalescing, order-based matching and generation-based late packet
// protection.

#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "sdr/bitmap.hpp"
#include "sdr/immediate.hpp"
#include "sdr/simnet.hpp"
#include "sdr/trace.hpp"

namespace sdr {

/// No free message slot; the caller retries once a receive completes.
class BackpressureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation not permitted in the current handle or matching state.
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct QpConfig {
  std::uint32_t mtu_bytes = 4096;
  std::uint32_t chunk_size_packets = 16;
  std::uint64_t max_msg_size_bytes = std::uint64_t{1} << 30;
  /// Number of internal generation QPs; stale packets up to generations-1
  /// slot reuses old are filtered.
  std::uint32_t generations = 4;
  /// Channel QPs per generation; packet i goes to channel i % num_channels.
  std::uint32_t num_channels = 1;
  ImmSplit imm_split{};

  void validate() const;
  std::uint32_t max_inflight_msgs() const { return imm_split.max_msg_ids(); }
  std::uint64_t chunk_bytes() const { return std::uint64_t{mtu_bytes} * chunk_size_packets; }
  std::uint64_t packets_for(std::uint64_t bytes) const { return (bytes + mtu_bytes - 1) / mtu_bytes; }
  std::uint64_t chunks_for_packets(std::uint64_t packets) const {
    return (packets + chunk_size_packets - 1) / chunk_size_packets;
  }
};

enum class DescriptorState { kPosted, kCompleted, kNulled };

struct MessageDescriptor {
  std::uint32_t msg_id = 0;
  /// Full reuse count of the slot; packets carry generation % generations.
  std::uint32_t generation = 0;
  std::uint64_t total_packets = 0;
  std::uint32_t chunk_size_packets = 1;
  Bitmap packet_bitmap;
  Bitmap chunk_bitmap;
  /// Received packets per chunk; a chunk bit is set when this hits the chunk's size.
  std::vector<std::uint32_t> chunk_fill;
  bool user_imm_expected = false;
  std::array<std::uint8_t, 32> imm_frags{};
  std::uint32_t imm_frags_received = 0;  // bit f set once fragment f arrived
  std::span<std::byte> buffer;  // empty for phantom posts
  std::uint64_t buffer_bytes = 0;
  DescriptorState state = DescriptorState::kPosted;

  std::uint64_t chunk_packets(std::uint64_t chunk) const;
};

/// Receive-side handle. Keeps the descriptor alive (and its bitmap readable)
/// after completion until released.
class RecvHandle {
 public:
  RecvHandle() = default;
  bool valid() const { return desc_ != nullptr; }
  std::uint32_t msg_id() const { return desc_->msg_id; }
  std::uint32_t generation() const { return desc_->generation; }
  std::uint64_t total_packets() const { return desc_->total_packets; }
  std::uint64_t total_chunks() const { return desc_->chunk_bitmap.size(); }
  DescriptorState state() const { return desc_ ? desc_->state : DescriptorState::kNulled; }

 private:
  friend class RecvQp;
  explicit RecvHandle(std::shared_ptr<MessageDescriptor> d) : desc_(std::move(d)) {}
  std::shared_ptr<MessageDescriptor> desc_;
};

/// Out-of-band clear-to-send: the receiver posted a buffer in slot msg_id.
struct ClearToSend {
  std::uint32_t msg_id = 0;
  std::uint32_t generation = 0;
  std::uint64_t buffer_bytes = 0;
};

enum class ArrivalAction { kAccepted, kDuplicate, kDiscardedNull, kDiscardedGeneration, kDiscardedInvalid };

const char* to_string(ArrivalAction a);

struct ArrivalResult {
  ArrivalAction action = ArrivalAction::kDiscardedInvalid;
  std::uint32_t msg_id = 0;
  std::uint64_t packet_offset = 0;
  /// Set when this packet completed a chunk.
  std::optional<std::uint64_t> chunk_completed;
};

struct RecvStats {
  std::uint64_t accepted = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t discarded_null = 0;
  std::uint64_t discarded_generation = 0;
  std::uint64_t discarded_invalid = 0;
  std::uint64_t discarded() const { return discarded_null + discarded_generation + discarded_invalid; }
};

class RecvQp {
 public:
  using CtsSink = std::function<void(const ClearToSend&)>;

  explicit RecvQp(QpConfig cfg);

  void set_cts_sink(CtsSink sink) { cts_sink_ = std::move(sink); }
  void set_tracer(const Tracer* t) { tracer_ = t; }

  /// Allocates the next sequential message slot. The buffer is written in
  /// place (zero-copy) and must outlive the handle's POSTED phase.
  /// Throws BackpressureError if that slot is still posted.
  RecvHandle recv_post(std::span<std::byte> buffer, bool user_imm_expected = false);
  /// Posts a message of `bytes` without backing memory; payloads are not written.
  RecvHandle recv_post_phantom(std::uint64_t bytes, bool user_imm_expected = false);

  ArrivalResult on_packet_arrival(const Packet& pkt);

  /// Snapshot of the chunk bitmap. Throws ProtocolError once released.
  Bitmap recv_bitmap_get(const RecvHandle& h) const;
  bool chunk_received(const RecvHandle& h, std::uint64_t chunk) const;

  /// Reconstructed user immediate once every fragment arrived.
  /// Throws ProtocolError if the message was posted without one.
  std::optional<std::uint32_t> recv_imm_get(const RecvHandle& h) const;

  /// Completes the receive and points its slot at the NULL key: later packets
  /// for it are discarded and the slot returns to the free pool with its
  /// generation advanced. Throws ProtocolError unless the handle is POSTED.
  void recv_complete(RecvHandle& h);

  /// Drops the completed snapshot; further bitmap reads fail.
  void recv_release(RecvHandle& h);

  /// Backend view, exposed for invariant checks.
  const MessageDescriptor& descriptor(const RecvHandle& h) const;

  const RecvStats& stats() const { return stats_; }
  const QpConfig& config() const { return cfg_; }
  std::uint32_t slot_generation(std::uint32_t msg_id) const { return slots_.at(msg_id).generation; }
  std::uint32_t posted_count() const { return posted_; }

 private:
  struct Slot {
    std::uint32_t generation = 0;
    std::shared_ptr<MessageDescriptor> active;  // null => NULL key
  };

  RecvHandle post(std::span<std::byte> buffer, std::uint64_t bytes, bool user_imm_expected);
  void trace(const char* event, std::uint32_t msg_id, std::uint32_t gen, std::int64_t off, const char* action) const;

  QpConfig cfg_;
  std::vector<Slot> slots_;
  std::uint32_t next_msg_id_ = 0;
  std::uint32_t posted_ = 0;
  RecvStats stats_;
  CtsSink cts_sink_;
  const Tracer* tracer_ = nullptr;
};

enum class SendMode { kOneShot, kStreaming };

class SendHandle {
 public:
  SendHandle() = default;
  bool valid() const { return st_ != nullptr; }
  std::uint32_t msg_id() const { return st_->msg_id; }
  std::uint32_t generation() const { return st_->generation; }
  SendMode mode() const { return st_->mode; }
  std::uint64_t injected_packets() const { return st_->injected_packets; }
  bool stream_open() const { return st_->stream_open; }
  bool complete() const { return st_->complete; }
  std::uint64_t remote_bytes() const { return st_->remote_bytes; }

 private:
  friend class SendQp;
  struct State {
    std::uint32_t msg_id = 0;
    std::uint32_t generation = 0;
    std::uint64_t remote_bytes = 0;
    SendMode mode = SendMode::kOneShot;
    std::uint64_t injected_packets = 0;
    bool stream_open = false;
    bool complete = false;
    std::optional<std::uint32_t> user_imm;
  };
  explicit SendHandle(std::shared_ptr<State> s) : st_(std::move(s)) {}
  std::shared_ptr<State> st_;
};

class SendQp {
 public:
  using PacketSink = std::function<void(Packet)>;

  explicit SendQp(QpConfig cfg);

  void set_packet_sink(PacketSink sink) { sink_ = std::move(sink); }
  void set_tracer(const Tracer* t) { tracer_ = t; }

  /// Receiver posted a buffer; sends are matched to CTS signals in order.
  void on_cts(const ClearToSend& cts);
  std::size_t pending_cts() const { return cts_.size(); }

  /// Injects the whole message as single-packet writes. Throws
  /// ProtocolError without a matching CTS and std::invalid_argument if the
  /// message is too large, or carries a user immediate but spans fewer
  /// packets than there are immediate fragments.
  SendHandle send_one_shot(Payload data, std::optional<std::uint32_t> user_imm = std::nullopt);
  SendHandle send_one_shot(std::span<const std::byte> data, std::optional<std::uint32_t> user_imm = std::nullopt);

  SendHandle send_stream_start(std::optional<std::uint32_t> user_imm = std::nullopt);
  /// Writes `data` at `remote_offset` (MTU-aligned) of the matched buffer.
  void send_stream_continue(SendHandle& h, std::uint64_t remote_offset, Payload data);
  void send_stream_continue(SendHandle& h, std::uint64_t remote_offset, std::span<const std::byte> data);
  void send_stream_end(SendHandle& h);

  std::uint64_t packets_injected() const { return packets_injected_; }
  const QpConfig& config() const { return cfg_; }

 private:
  SendHandle match(SendMode mode, std::optional<std::uint32_t> user_imm);
  void emit(SendHandle::State& st, std::uint64_t first_packet, const Payload& data);

  QpConfig cfg_;
  std::deque<ClearToSend> cts_;
  PacketSink sink_;
  const Tracer* tracer_ = nullptr;
  std::uint64_t packets_injected_ = 0;
};

/// Copies a span into a shared payload.
Payload make_payload(std::span<const std::byte> data);
/// Payload with a length but no bytes; receivers skip the buffer write.
Payload phantom_payload(std::size_t length);

}  // namespace sdr
