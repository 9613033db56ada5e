#pragma once

// Deterministic discrete-event engine and the unreliable channel model that
// the SDR protocol state machines run on.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <queue>
#include <span>
#include <unordered_map>
#include <vector>

#include "sdr/rng.hpp"

namespace sdr {

/// Simulation clock. Integer nanoseconds since simulation start.
struct SimClock {
  using rep = std::int64_t;
  using period = std::nano;
  using duration = std::chrono::duration<rep, period>;
  using time_point = std::chrono::time_point<SimClock>;
  static constexpr bool is_steady = true;
};

using Duration = SimClock::duration;
using SimTime = SimClock::time_point;

/// Rounds a duration in seconds to the nearest tick.
Duration from_seconds(double seconds);
double to_seconds(Duration d);
double to_seconds(SimTime t);

using EventId = std::uint64_t;

/// Event queue with FIFO tie-breaking on equal timestamps.
class Simulator {
 public:
  using Callback = std::function<void()>;

  SimTime now() const { return now_; }

  /// Throws std::invalid_argument if `at` lies in the past.
  EventId schedule_at(SimTime at, Callback cb);
  EventId schedule_after(Duration delay, Callback cb);

  /// True if the event was pending and is now suppressed.
  bool cancel(EventId id);

  /// Fires the next pending event. Returns false when the queue is empty.
  bool step();
  void run();
  /// Fires every event with timestamp <= `until`, then advances the clock to it.
  void run_until(SimTime until);
  /// Drops all pending events.
  void clear();

  std::size_t pending() const { return callbacks_.size(); }
  std::uint64_t fired() const { return fired_; }

 private:
  struct Entry {
    SimTime at;
    EventId id;
    bool operator>(const Entry& o) const { return at != o.at ? at > o.at : id > o.id; }
  };

  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap_;
  std::unordered_map<EventId, Callback> callbacks_;
  SimTime now_{};
  EventId next_id_ = 0;
  std::uint64_t fired_ = 0;
};

struct ChannelParams {
  double bandwidth_bits_per_sec = 400e9;
  Duration rtt = std::chrono::milliseconds(25);
  /// Applied independently to every transmitted packet.
  double p_drop = 0.0;
  /// Switch-buffering coefficient: RTO = rtt + alpha * rtt.
  double alpha = 2.0;
  /// Receiver-side buffering coefficient used by the EC fallback timeout.
  double beta = 1.0;
  /// Upper bound of the uniform extra delay added to each packet.
  Duration reorder_jitter{0};

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  Duration one_way() const { return rtt / 2; }
  Duration rto() const;
  /// Serialization time of `bytes` at this bandwidth, in seconds.
  double serialization_seconds(std::size_t bytes) const {
    return static_cast<double>(bytes) * 8.0 / bandwidth_bits_per_sec;
  }
};

/// Contiguous read-only region of a shared byte buffer. Packets reference the
/// sender's buffer rather than copying it.
struct Payload {
  std::shared_ptr<const std::vector<std::byte>> bytes;
  std::size_t offset = 0;
  std::size_t length = 0;

  std::span<const std::byte> view() const {
    if (!bytes) return {};
    return std::span<const std::byte>(*bytes).subspan(offset, length);
  }
  Payload slice(std::size_t off, std::size_t len) const { return {bytes, offset + off, len}; }
};

struct Packet {
  std::uint32_t payload_len = 0;
  /// Encoded 32-bit transport immediate.
  std::uint32_t immediate = 0;
  /// Offset relative to the receiver's root memory key.
  std::uint64_t dest_offset_bytes = 0;
  std::uint32_t channel_qp_index = 0;
  std::uint32_t generation = 0;
  /// Absent for payload-free packets (model-scale runs).
  Payload payload;
};

/// One direction of an unreliable link. Packets serialize one after another
/// at the configured bandwidth, are dropped i.i.d. with probability p_drop,
/// and arrive after serialization + rtt/2 + uniform jitter.
class Channel {
 public:
  /// Return true to force-drop the packet. `index` counts every packet handed
  /// to transmit() on this channel, starting at 0.
  using DropFilter = std::function<bool(const Packet&, std::uint64_t index)>;

  Channel(ChannelParams params, std::uint64_t seed);

  /// Returns the arrival time, or nullopt if the packet is dropped.
  std::optional<SimTime> transmit(const Packet& pkt, SimTime now);

  /// Time at which the sender finishes serializing everything queued so far.
  SimTime busy_until() const;
  const ChannelParams& params() const { return params_; }
  void set_drop_filter(DropFilter f) { filter_ = std::move(f); }

  std::uint64_t transmitted() const { return transmitted_; }
  std::uint64_t dropped() const { return dropped_; }
  std::uint64_t bytes_transmitted() const { return bytes_; }

 private:
  ChannelParams params_;
  Rng rng_;
  DropFilter filter_;
  // Kept in fractional nanoseconds so per-packet rounding does not accumulate.
  double busy_until_ns_ = 0.0;
  std::uint64_t transmitted_ = 0;
  std::uint64_t dropped_ = 0;
  std::uint64_t bytes_ = 0;
};

}  // namespace sdr
