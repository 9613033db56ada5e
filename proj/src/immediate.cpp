#include "sdr/immediate.hpp"

#include <stdexcept>
#include <string>

namespace sdr {

namespace {

std::uint32_t field_mask(unsigned bits) {
  return bits >= 32 ? ~std::uint32_t{0} : (std::uint32_t{1} << bits) - 1;
}

void check_field(const char* name, std::uint32_t value, unsigned bits) {
  if (value > field_mask(bits)) {
    throw std::invalid_argument(std::string("immediate field ") + name + " = " + std::to_string(value) +
                                " does not fit in " + std::to_string(bits) + " bits");
  }
}

}  // namespace

void ImmSplit::validate() const {
  if (msg_id_bits + offset_bits + frag_bits != 32) {
    throw std::invalid_argument("immediate split must sum to 32 bits");
  }
  if (msg_id_bits == 0 || offset_bits == 0) {
    throw std::invalid_argument("immediate split needs non-empty msg_id and offset fields");
  }
  if (frag_bits != 0 && 32 % frag_bits != 0) {
    throw std::invalid_argument("fragment width must divide 32");
  }
}

std::uint32_t encode_immediate(const TransportImmediate& imm, const ImmSplit& split) {
  split.validate();
  check_field("msg_id", imm.msg_id, split.msg_id_bits);
  check_field("packet_offset", imm.packet_offset, split.offset_bits);
  check_field("imm_frag", imm.imm_frag, split.frag_bits);
  return (imm.msg_id << (split.offset_bits + split.frag_bits)) | (imm.packet_offset << split.frag_bits) |
         imm.imm_frag;
}

TransportImmediate decode_immediate(std::uint32_t word, const ImmSplit& split) {
  split.validate();
  TransportImmediate imm;
  imm.imm_frag = word & field_mask(split.frag_bits);
  imm.packet_offset = (word >> split.frag_bits) & field_mask(split.offset_bits);
  imm.msg_id = (word >> (split.offset_bits + split.frag_bits)) & field_mask(split.msg_id_bits);
  return imm;
}

}  // namespace sdr
