#pragma once

#include <cstdint>

namespace sdr {

/// Field widths of the 32-bit transport immediate. Message ID occupies the
/// high bits, the user-immediate fragment the low bits.
struct ImmSplit {
  unsigned msg_id_bits = 10;
  unsigned offset_bits = 18;
  unsigned frag_bits = 4;

  /// Throws std::invalid_argument unless the widths sum to 32.
  void validate() const;
  std::uint32_t max_msg_ids() const { return std::uint32_t{1} << msg_id_bits; }
  std::uint64_t max_packets() const { return std::uint64_t{1} << offset_bits; }
  /// Number of packets needed to carry a full 32-bit user immediate.
  unsigned fragments_per_imm() const { return frag_bits == 0 ? 0 : 32 / frag_bits; }
};

struct TransportImmediate {
  std::uint32_t msg_id = 0;
  std::uint32_t packet_offset = 0;
  std::uint32_t imm_frag = 0;

  bool operator==(const TransportImmediate&) const = default;
};

/// Throws std::invalid_argument if a field does not fit its width.
std::uint32_t encode_immediate(const TransportImmediate& imm, const ImmSplit& split = {});
TransportImmediate decode_immediate(std::uint32_t word, const ImmSplit& split = {});

}  // namespace sdr
