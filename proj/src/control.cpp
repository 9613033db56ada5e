#include "sdr/control.hpp"

#include <stdexcept>

namespace sdr {

namespace {

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::byte>((v >> s) & 0xff));
}

std::uint32_t get_u32(std::span<const std::byte> in, std::size_t at) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<std::uint32_t>(in[at + i]);
  return v;
}

}  // namespace

bool SrAck::covers(std::uint64_t chunk) const {
  if (static_cast<std::int64_t>(chunk) <= cumulative) return true;
  const std::uint64_t rel = chunk - static_cast<std::uint64_t>(cumulative + 1);
  if (rel / 8 >= selective.size()) return false;
  return (selective[rel / 8] >> (rel % 8)) & 1U;
}

std::vector<std::byte> encode_sr_ack(const SrAck& ack) {
  std::vector<std::byte> out;
  out.reserve(4 + ack.selective.size());
  put_u32(out, static_cast<std::uint32_t>(ack.cumulative));
  for (auto b : ack.selective) out.push_back(static_cast<std::byte>(b));
  return out;
}

SrAck decode_sr_ack(std::span<const std::byte> wire) {
  if (wire.size() < 4) throw std::invalid_argument("decode_sr_ack: truncated");
  SrAck ack;
  ack.cumulative = static_cast<std::int32_t>(get_u32(wire, 0));
  for (std::size_t i = 4; i < wire.size(); ++i) ack.selective.push_back(static_cast<std::uint8_t>(wire[i]));
  return ack;
}

std::vector<std::byte> encode_ec_nack(const EcNack& nack) {
  if (nack.failed_submessages.size() > 0xffff) throw std::invalid_argument("encode_ec_nack: too many entries");
  std::vector<std::byte> out;
  const auto n = static_cast<std::uint16_t>(nack.failed_submessages.size());
  out.push_back(static_cast<std::byte>(n >> 8));
  out.push_back(static_cast<std::byte>(n & 0xff));
  for (auto idx : nack.failed_submessages) put_u32(out, idx);
  return out;
}

EcNack decode_ec_nack(std::span<const std::byte> wire) {
  if (wire.size() < 2) throw std::invalid_argument("decode_ec_nack: truncated");
  const std::size_t n = (static_cast<std::size_t>(wire[0]) << 8) | static_cast<std::size_t>(wire[1]);
  if (wire.size() != 2 + 4 * n) throw std::invalid_argument("decode_ec_nack: length mismatch");
  EcNack nack;
  for (std::size_t i = 0; i < n; ++i) nack.failed_submessages.push_back(get_u32(wire, 2 + 4 * i));
  return nack;
}

std::vector<std::byte> encode_ec_ack(const EcAck&) { return {}; }

std::size_t wire_size(const ControlMessage& msg) {
  return std::visit(
      [](const auto& m) -> std::size_t {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, SrAck>) return 4 + m.selective.size();
        else if constexpr (std::is_same_v<T, EcNack>) return 2 + 4 * m.failed_submessages.size();
        else return 0;
      },
      msg);
}

}  // namespace sdr
