#pragma once

// Erasure codecs over equal-length byte blocks: the XOR modulo-group code and
// a systematic Reed-Solomon style MDS code built from a Cauchy matrix over
// GF(2^8).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace sdr {

enum class EcCode { kXor, kMds };

const char* to_string(EcCode c);

struct EcConfig {
  std::uint32_t k = 32;
  std::uint32_t m = 8;
  EcCode code = EcCode::kMds;

  /// Parity ratio k/m.
  double parity_ratio() const { return static_cast<double>(k) / m; }
  /// XOR modulo-group size k/m + 1.
  std::uint32_t group_size() const { return k / m + 1; }
  /// Throws std::invalid_argument: k, m >= 1, k + m <= 256, and m | k for XOR.
  void validate() const;
};

namespace gf256 {

std::uint8_t add(std::uint8_t a, std::uint8_t b);
std::uint8_t mul(std::uint8_t a, std::uint8_t b);
std::uint8_t inv(std::uint8_t a);
std::uint8_t div(std::uint8_t a, std::uint8_t b);
/// dst[i] ^= c * src[i]
void mul_add(std::span<std::byte> dst, std::span<const std::byte> src, std::uint8_t c);

}  // namespace gf256

/// Block geometry of one coded submessage. Full submessages use (k, m) of the
/// EcConfig; the final submessage of a message whose chunk count k does not
/// divide is a shortened code with fewer data and parity blocks.
struct EcGeometry {
  std::uint32_t data_blocks = 0;
  std::uint32_t parity_blocks = 0;
  EcCode code = EcCode::kMds;

  std::uint32_t total() const { return data_blocks + parity_blocks; }
};

/// Parity count for a submessage holding `data_blocks` of a (k, m) code:
/// ceil(data_blocks * m / k).
std::uint32_t parity_blocks_for(std::uint32_t data_blocks, const EcConfig& cfg);
EcGeometry geometry_for(std::uint32_t data_blocks, const EcConfig& cfg);

/// Cauchy coefficient for parity row i, data column j: 1 / (x_i + y_j) with
/// x_i = data_blocks + i, y_j = j.
std::uint8_t cauchy_coefficient(const EcGeometry& g, std::uint32_t parity_row, std::uint32_t data_col);

/// Whether the erasure pattern is recoverable. `present` has total() entries,
/// data blocks first. XOR: every modulo group (data j with j % parity_blocks
/// == i, plus parity i) misses at most one block. MDS: at least data_blocks
/// blocks present.
bool ec_decodable(const EcGeometry& g, const std::vector<bool>& present);

/// Computes the parity blocks. Throws std::invalid_argument on unequal block
/// lengths or a wrong block count.
std::vector<std::vector<std::byte>> ec_encode(const EcGeometry& g, std::span<const std::span<const std::byte>> data);
std::vector<std::vector<std::byte>> ec_encode(const EcConfig& cfg, std::span<const std::span<const std::byte>> data);

/// Indexed block: index < data_blocks is data, otherwise parity index - data_blocks.
struct IndexedBlock {
  std::uint32_t index = 0;
  std::span<const std::byte> bytes;
};

/// Reconstructs every data block, or nullopt if the pattern is not
/// recoverable. Throws std::invalid_argument on duplicate or out-of-range
/// indices and on blocks of differing length.
std::optional<std::vector<std::vector<std::byte>>> ec_decode(const EcGeometry& g, std::span<const IndexedBlock> present);
std::optional<std::vector<std::vector<std::byte>>> ec_decode(const EcConfig& cfg, std::span<const IndexedBlock> present);

}  // namespace sdr
