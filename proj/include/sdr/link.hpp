#pragma once

#include <cstdint>
#include <functional>
#include <memory>

#include "sdr/control.hpp"
#include "sdr/qp.hpp"
#include "sdr/simnet.hpp"
#include "sdr/trace.hpp"

namespace sdr {

struct LinkConfig {
  ChannelParams channel;
  /// Drop probability of the reverse control path (ACK/NACK).
  double control_p_drop = 0.0;
  QpConfig qp;
  std::uint64_t seed = 1;
};

/// Two SDR endpoints joined by a lossy data channel (sender -> receiver), a
/// lossy control channel (receiver -> sender) and a lossless out-of-band path
/// for clear-to-send signals.
class Link {
 public:
  using ArrivalListener = std::function<void(const ArrivalResult&)>;
  using ControlHandler = std::function<void(const ControlMessage&)>;

  Link(Simulator& sim, LinkConfig cfg, const Tracer* tracer = nullptr);
  Link(const Link&) = delete;
  Link& operator=(const Link&) = delete;

  Simulator& sim() { return sim_; }
  SendQp& sender() { return send_; }
  RecvQp& receiver() { return recv_; }
  Channel& data_channel() { return data_; }
  Channel& control_channel() { return control_; }
  const LinkConfig& config() const { return cfg_; }

  void set_arrival_listener(ArrivalListener l) { on_arrival_ = std::move(l); }
  void set_sender_control_handler(ControlHandler h) { on_control_ = std::move(h); }

  /// Receiver -> sender control message over the control channel.
  void send_to_sender(ControlMessage msg);

  /// Time to serialize one bitmap chunk on the data channel.
  Duration chunk_injection_time() const;

  std::uint64_t control_sent() const { return control_sent_; }
  const Tracer* tracer() const { return tracer_; }

 private:
  Simulator& sim_;
  LinkConfig cfg_;
  const Tracer* tracer_;
  SendQp send_;
  RecvQp recv_;
  Channel data_;
  Channel control_;
  ArrivalListener on_arrival_;
  ControlHandler on_control_;
  std::uint64_t control_sent_ = 0;
};

}  // namespace sdr
