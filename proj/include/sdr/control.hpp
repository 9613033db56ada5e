#pragma once

// Control-path messages of the reliability layers and their wire formats.
// Multi-byte integers are big-endian.
//
//   SR ACK : int32 cumulative (two's complement, -1 = nothing in prefix)
//            followed by the selective window bytes; bit b of byte i covers
//            chunk cumulative + 1 + 8*i + b.
//   EC NACK: uint16 count followed by count uint32 submessage indices.
//   EC ACK : empty payload.

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

namespace sdr {

struct SrAck {
  std::int32_t cumulative = -1;
  std::vector<std::uint8_t> selective;  // window bytes

  /// Whether the ACK reports `chunk` as received.
  bool covers(std::uint64_t chunk) const;
  bool operator==(const SrAck&) const = default;
};

struct EcAck {
  bool operator==(const EcAck&) const = default;
};

struct EcNack {
  std::vector<std::uint32_t> failed_submessages;
  bool operator==(const EcNack&) const = default;
};

using ControlMessage = std::variant<SrAck, EcAck, EcNack>;

std::vector<std::byte> encode_sr_ack(const SrAck& ack);
/// Throws std::invalid_argument if shorter than 4 bytes.
SrAck decode_sr_ack(std::span<const std::byte> wire);

std::vector<std::byte> encode_ec_nack(const EcNack& nack);
/// Throws std::invalid_argument on truncated input or more than 65535 entries.
EcNack decode_ec_nack(std::span<const std::byte> wire);

std::vector<std::byte> encode_ec_ack(const EcAck&);

/// Wire size of any control message.
std::size_t wire_size(const ControlMessage& msg);

}  // namespace sdr
