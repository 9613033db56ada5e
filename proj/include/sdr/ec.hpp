#pragma once

// Erasure-coded reliability: the message is cut into submessages of k chunks,
// each followed by its parity submessage. The receiver ACKs once every
// submessage decodes, or NACKs the undecodable ones when the fallback timeout
// expires; those are then recovered with Selective Repeat.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "sdr/ec_codec.hpp"
#include "sdr/sr.hpp"

namespace sdr {

/// How a message of `message_bytes` splits into coded submessages.
struct EcLayout {
  EcConfig code;
  std::uint64_t message_bytes = 0;
  std::uint64_t chunk_bytes = 0;
  std::uint64_t chunks = 0;
  std::uint32_t submessages = 0;

  static EcLayout make(std::uint64_t message_bytes, std::uint64_t chunk_bytes, const EcConfig& code);

  EcGeometry geometry(std::uint32_t s) const;
  std::uint64_t first_chunk(std::uint32_t s) const { return std::uint64_t{s} * code.k; }
  std::uint64_t data_offset(std::uint32_t s) const { return first_chunk(s) * chunk_bytes; }
  std::uint64_t data_bytes(std::uint32_t s) const;
  std::uint64_t parity_bytes(std::uint32_t s) const { return std::uint64_t{geometry(s).parity_blocks} * chunk_bytes; }
  std::uint64_t parity_chunks() const;
};

struct EcTimers {
  Duration fto{0};
  Duration global_timeout{0};

  /// fto = (M + ceil(M*m/k)) * t_inj + beta * rtt; global = 4 * fto + 4 * rtt.
  static EcTimers defaults(const EcLayout& layout, const ChannelParams& ch);
};

class EcSender {
 public:
  /// `message` may be a phantom payload, in which case parity is not computed.
  EcSender(Link& link, EcLayout layout, EcTimers timers, SrConfig fallback, Payload message,
           Duration encode_cost_per_byte = Duration{0});
  EcSender(const EcSender&) = delete;
  EcSender& operator=(const EcSender&) = delete;
  ~EcSender();

  /// Needs one CTS per posted submessage (2 per coded submessage).
  void start();
  void on_control(const ControlMessage& msg);

  bool done() const { return completed_at_.has_value(); }
  bool aborted() const { return aborted_; }
  bool fallback() const { return fallback_ != nullptr; }
  std::optional<SimTime> started_at() const { return started_at_; }
  std::optional<SimTime> completed_at() const { return completed_at_; }
  std::uint64_t data_chunks_injected() const;
  std::uint64_t parity_chunks_injected() const { return parity_chunks_; }
  std::uint64_t retransmitted_chunks() const;
  const std::vector<std::uint32_t>& nacked() const { return nacked_; }

 private:
  void inject_parity(std::uint32_t s);
  void finish();

  Link& link_;
  EcLayout layout_;
  EcTimers timers_;
  SrConfig sr_cfg_;
  Payload message_;
  Duration encode_cost_;
  std::vector<SendHandle> data_;
  std::vector<SendHandle> parity_;
  std::vector<EventId> pending_parity_;
  std::unique_ptr<SrSender> fallback_;
  std::vector<std::uint32_t> nacked_;
  std::optional<EventId> global_timer_;
  std::optional<SimTime> started_at_;
  std::optional<SimTime> completed_at_;
  bool aborted_ = false;
  std::uint64_t data_chunks_ = 0;
  std::uint64_t parity_chunks_ = 0;
};

class EcReceiver {
 public:
  /// Posts every submessage in order D0 P0 D1 P1 ... An empty `buffer` posts
  /// payload-free receives. Throws std::invalid_argument if the message needs
  /// more slots than the QP has.
  EcReceiver(Link& link, EcLayout layout, EcTimers timers, SrConfig fallback, std::span<std::byte> buffer);
  EcReceiver(const EcReceiver&) = delete;
  EcReceiver& operator=(const EcReceiver&) = delete;
  ~EcReceiver();

  /// Starts polling. Must be attached as the link's arrival listener through
  /// on_arrival() so the fallback timer arms on the first chunk.
  void start();
  void stop();
  void on_arrival(const ArrivalResult& r);

  /// One poll: returns the control message sent, if any.
  std::optional<ControlMessage> tick();

  bool done() const { return done_; }
  bool fto_armed() const { return fto_timer_.has_value() || fto_fired_; }
  bool in_fallback() const { return fallback_ != nullptr; }
  std::vector<std::uint32_t> undecodable() const;
  bool decodable(std::uint32_t s) const;

 private:
  void poll();
  void on_fto();
  void decode(std::uint32_t s);
  void complete_all();

  Link& link_;
  EcLayout layout_;
  EcTimers timers_;
  SrConfig sr_cfg_;
  std::span<std::byte> buffer_;
  std::vector<std::vector<std::byte>> parity_buf_;
  std::vector<RecvHandle> data_;
  std::vector<RecvHandle> parity_;
  std::vector<bool> decodable_;
  std::optional<EventId> poll_timer_;
  std::optional<EventId> fto_timer_;
  bool fto_fired_ = false;
  bool done_ = false;
  bool acked_ = false;
  std::unique_ptr<SrReceiver> fallback_;
  std::vector<std::uint32_t> failed_;
  SimTime last_nack_{};
  std::uint64_t fallback_seen_ = 0;
};

struct EcTransferOptions : TransferOptions {
  EcConfig ec;
  /// Computed from the layout when unset.
  std::optional<EcTimers> timers;
  Duration encode_cost_per_byte{0};
};

/// Runs one EC Write. Throws TimeoutError when the global timeout aborts it.
TransferResult run_ec_transfer(const EcTransferOptions& opt, std::span<const std::byte> message);
TransferResult run_ec_transfer(const EcTransferOptions& opt, std::uint64_t message_bytes);

}  // namespace sdr
