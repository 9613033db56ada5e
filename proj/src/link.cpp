#include "sdr/link.hpp"

namespace sdr {

namespace {

ChannelParams control_params(const LinkConfig& cfg) {
  ChannelParams p = cfg.channel;
  p.p_drop = cfg.control_p_drop;
  p.reorder_jitter = Duration::zero();
  return p;
}

}  // namespace

Link::Link(Simulator& sim, LinkConfig cfg, const Tracer* tracer)
    : sim_(sim),
      cfg_(cfg),
      tracer_(tracer),
      send_(cfg.qp),
      recv_(cfg.qp),
      data_(cfg.channel, Rng::substream(cfg.seed, 0)()),
      control_(control_params(cfg), Rng::substream(cfg.seed, 1)()) {
  send_.set_tracer(tracer_);
  recv_.set_tracer(tracer_);

  recv_.set_cts_sink([this](const ClearToSend& cts) {
    sim_.schedule_after(cfg_.channel.one_way(), [this, cts] { send_.on_cts(cts); });
  });

  send_.set_packet_sink([this](Packet pkt) {
    const auto arrival = data_.transmit(pkt, sim_.now());
    if (!arrival) {
      if (tracer_) {
        const auto imm = decode_immediate(pkt.immediate, cfg_.qp.imm_split);
        tracer_->record("wire", imm.msg_id, pkt.generation, imm.packet_offset, "dropped");
      }
      return;
    }
    sim_.schedule_at(*arrival, [this, pkt = std::move(pkt)] {
      const ArrivalResult r = recv_.on_packet_arrival(pkt);
      if (on_arrival_) on_arrival_(r);
    });
  });
}

void Link::send_to_sender(ControlMessage msg) {
  ++control_sent_;
  Packet pkt;
  pkt.payload_len = static_cast<std::uint32_t>(wire_size(msg));
  const auto arrival = control_.transmit(pkt, sim_.now());
  if (!arrival) {
    if (tracer_) tracer_->record("control", -1, -1, -1, "dropped");
    return;
  }
  sim_.schedule_at(*arrival, [this, msg = std::move(msg)] {
    if (on_control_) on_control_(msg);
  });
}

Duration Link::chunk_injection_time() const {
  return from_seconds(cfg_.channel.serialization_seconds(cfg_.qp.chunk_bytes()));
}

}  // namespace sdr
