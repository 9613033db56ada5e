#pragma once

// Selective Repeat reliability over SDR streaming sends: per-chunk
// retransmission timeout on the sender, periodic cumulative + selective ACKs
// from the receiver's chunk bitmap.

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "sdr/bitmap.hpp"
#include "sdr/control.hpp"
#include "sdr/link.hpp"

namespace sdr {

enum class SrVariant {
  kRto,   // timeout = rtt + alpha * rtt
  kNack,  // drop detection approximated by a one-rtt timeout
};

const char* to_string(SrVariant v);

struct SrConfig {
  SrVariant variant = SrVariant::kRto;
  Duration rto{};
  Duration ack_poll_period{};
  std::size_t selective_window_bytes = 64;

  /// rto from the variant; poll period max(rtt / 8, 4 chunk injection times).
  static SrConfig defaults(const ChannelParams& ch, std::uint64_t chunk_bytes, SrVariant variant = SrVariant::kRto);
  void validate() const;
};

/// ACK for a chunk bitmap: cumulative = last index of the all-ones prefix
/// (-1 if chunk 0 is missing); window covers the following window_bytes * 8
/// chunks.
SrAck make_sr_ack(const Bitmap& chunks, std::size_t window_bytes);

/// One receiver poll for a single message. Nothing is returned once the
/// handle has been released.
std::optional<SrAck> sr_receiver_tick(const RecvQp& qp, const RecvHandle& h, const SrConfig& cfg);

/// Chunk the sender is responsible for: where it goes and what it carries.
struct SrChunkTarget {
  SendHandle stream;
  std::uint64_t remote_offset = 0;
  Payload data;
};

class SrSender {
 public:
  SrSender(Link& link, SrConfig cfg, std::vector<SrChunkTarget> chunks);
  SrSender(const SrSender&) = delete;
  SrSender& operator=(const SrSender&) = delete;
  ~SrSender();

  /// Injects every chunk now and arms one timer per chunk.
  void start();
  /// Dequeues acknowledged chunks and cancels their timers.
  void on_ack(const SrAck& ack);
  /// Cancels all timers without completing.
  void abort();

  bool done() const { return completed_at_.has_value(); }
  std::optional<SimTime> started_at() const { return started_at_; }
  std::optional<SimTime> completed_at() const { return completed_at_; }
  std::size_t outstanding() const { return chunks_.size() - acked_count_; }
  bool acked(std::size_t chunk) const { return acked_[chunk]; }
  std::uint64_t injections(std::size_t chunk) const { return injections_[chunk]; }
  std::uint64_t retransmissions() const { return retransmissions_; }
  std::uint64_t chunks_injected() const { return chunks_injected_; }
  std::size_t size() const { return chunks_.size(); }

  void set_on_complete(std::function<void()> cb) { on_complete_ = std::move(cb); }
  /// Called whenever a chunk is (re)injected; index and whether it is a retransmission.
  void set_on_inject(std::function<void(std::size_t, bool)> cb) { on_inject_ = std::move(cb); }

 private:
  void inject(std::size_t c);
  void on_timeout(std::size_t c);
  void mark_acked(std::size_t c);

  Link& link_;
  SrConfig cfg_;
  std::vector<SrChunkTarget> chunks_;
  std::vector<bool> acked_;
  std::vector<std::optional<EventId>> timers_;
  std::vector<std::uint64_t> injections_;
  std::size_t acked_count_ = 0;
  std::size_t first_unacked_ = 0;
  std::uint64_t retransmissions_ = 0;
  std::uint64_t chunks_injected_ = 0;
  std::optional<SimTime> started_at_;
  std::optional<SimTime> completed_at_;
  std::function<void()> on_complete_;
  std::function<void(std::size_t, bool)> on_inject_;
};

/// A chunk the receiver watches: bit `chunk` of `handle`'s bitmap.
struct SrChunkSource {
  RecvHandle handle;
  std::uint64_t chunk = 0;
};

class SrReceiver {
 public:
  SrReceiver(Link& link, SrConfig cfg, std::vector<SrChunkSource> chunks);
  SrReceiver(const SrReceiver&) = delete;
  SrReceiver& operator=(const SrReceiver&) = delete;
  ~SrReceiver();

  /// Current view of the watched chunks.
  Bitmap bitmap() const;
  SrAck current_ack() const { return make_sr_ack(bitmap(), cfg_.selective_window_bytes); }

  /// Starts periodic polling. Each poll sends an ACK once anything arrived;
  /// after everything arrived it keeps repeating the final ACK until stop().
  void start();
  void stop();

  bool all_received() const { return all_received_; }
  std::uint64_t acks_sent() const { return acks_sent_; }
  /// Every ACK sent, with the bitmap it was computed from.
  const std::vector<std::pair<SrAck, Bitmap>>& ack_log() const { return ack_log_; }
  void set_log_acks(bool on) { log_acks_ = on; }

  void set_on_all_received(std::function<void()> cb) { on_all_received_ = std::move(cb); }

 private:
  void poll();

  Link& link_;
  SrConfig cfg_;
  std::vector<SrChunkSource> chunks_;
  std::optional<EventId> timer_;
  bool all_received_ = false;
  bool log_acks_ = false;
  std::uint64_t acks_sent_ = 0;
  std::vector<std::pair<SrAck, Bitmap>> ack_log_;
  std::function<void()> on_all_received_;
};

/// Raised when a transfer exceeds its deadline or global timeout.
class TimeoutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TransferOptions {
  LinkConfig link;
  /// Unset fields (zero rto / poll period) take SrConfig::defaults.
  SrConfig sr;
  /// Forced drops on the data channel, applied in addition to p_drop.
  Channel::DropFilter data_drop_filter;
  const Tracer* tracer = nullptr;
  /// Zero means no deadline.
  Duration deadline{0};
  /// Record every SR ACK with the bitmap it was built from.
  bool log_acks = false;
};

struct TransferResult {
  /// First injection to reception of the final ACK at the sender.
  Duration completion{0};
  bool fallback = false;
  std::uint64_t data_chunks_injected = 0;
  std::uint64_t parity_chunks_injected = 0;
  std::uint64_t retransmitted_chunks = 0;
  std::uint64_t packets_sent = 0;
  std::uint64_t packets_dropped = 0;
  std::uint64_t control_messages = 0;
  /// Receiver buffer after the transfer (empty for payload-free runs).
  std::vector<std::byte> received;
  /// SR ACKs with the receiver bitmap at emission, when requested.
  std::vector<std::pair<SrAck, Bitmap>> ack_log;
};

SrConfig resolve_sr_config(const TransferOptions& opt);

/// Runs one SR Write of `message` over a fresh link. Throws TimeoutError if
/// the deadline passes first.
TransferResult run_sr_transfer(const TransferOptions& opt, std::span<const std::byte> message);
/// Same, without carrying payload bytes.
TransferResult run_sr_transfer(const TransferOptions& opt, std::uint64_t message_bytes);

}  // namespace sdr
