#include "sdr/ec_codec.hpp"

#include <array>
#include <stdexcept>
#include <string>

namespace sdr {

const char* to_string(EcCode c) { return c == EcCode::kXor ? "xor" : "mds"; }

void EcConfig::validate() const {
  if (k == 0 || m == 0) throw std::invalid_argument("ec: k and m must be >= 1");
  if (k + m > 256) throw std::invalid_argument("ec: k + m must be <= 256 for GF(2^8)");
  if (code == EcCode::kXor && k % m != 0) throw std::invalid_argument("ec: XOR code needs m to divide k");
}

namespace gf256 {
namespace {

// Primitive polynomial x^8 + x^4 + x^3 + x^2 + 1.
struct Tables {
  std::array<std::uint8_t, 512> exp{};
  std::array<std::uint8_t, 256> log{};
  Tables() {
    unsigned x = 1;
    for (unsigned i = 0; i < 255; ++i) {
      exp[i] = static_cast<std::uint8_t>(x);
      log[x] = static_cast<std::uint8_t>(i);
      x <<= 1;
      if (x & 0x100) x ^= 0x11d;
    }
    for (unsigned i = 255; i < 512; ++i) exp[i] = exp[i - 255];
  }
};

const Tables& tables() {
  static const Tables t;
  return t;
}

}  // namespace

std::uint8_t add(std::uint8_t a, std::uint8_t b) { return a ^ b; }

std::uint8_t mul(std::uint8_t a, std::uint8_t b) {
  if (a == 0 || b == 0) return 0;
  const auto& t = tables();
  return t.exp[t.log[a] + t.log[b]];
}

std::uint8_t inv(std::uint8_t a) {
  if (a == 0) throw std::domain_error("gf256: inverse of zero");
  const auto& t = tables();
  return t.exp[255 - t.log[a]];
}

std::uint8_t div(std::uint8_t a, std::uint8_t b) { return mul(a, inv(b)); }

void mul_add(std::span<std::byte> dst, std::span<const std::byte> src, std::uint8_t c) {
  if (c == 0) return;
  if (c == 1) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] ^= src[i];
    return;
  }
  // Row of the multiplication table for c.
  std::array<std::uint8_t, 256> row{};
  for (unsigned v = 0; v < 256; ++v) row[v] = mul(c, static_cast<std::uint8_t>(v));
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] ^= static_cast<std::byte>(row[static_cast<std::uint8_t>(src[i])]);
  }
}

}  // namespace gf256

std::uint32_t parity_blocks_for(std::uint32_t data_blocks, const EcConfig& cfg) {
  return static_cast<std::uint32_t>((std::uint64_t{data_blocks} * cfg.m + cfg.k - 1) / cfg.k);
}

EcGeometry geometry_for(std::uint32_t data_blocks, const EcConfig& cfg) {
  return EcGeometry{data_blocks, parity_blocks_for(data_blocks, cfg), cfg.code};
}

std::uint8_t cauchy_coefficient(const EcGeometry& g, std::uint32_t parity_row, std::uint32_t data_col) {
  const auto x = static_cast<std::uint8_t>(g.data_blocks + parity_row);
  const auto y = static_cast<std::uint8_t>(data_col);
  return gf256::inv(gf256::add(x, y));
}

namespace {

void check_geometry(const EcGeometry& g) {
  if (g.data_blocks == 0 || g.parity_blocks == 0) throw std::invalid_argument("ec: empty geometry");
  if (g.total() > 256) throw std::invalid_argument("ec: more than 256 blocks");
}

std::size_t common_length(std::span<const std::span<const std::byte>> blocks) {
  const std::size_t len = blocks.empty() ? 0 : blocks[0].size();
  for (const auto& b : blocks) {
    if (b.size() != len) throw std::invalid_argument("ec: blocks must have equal length");
  }
  return len;
}

// Inverts a square matrix over GF(2^8) in place; false if singular.
bool invert(std::vector<std::vector<std::uint8_t>>& a) {
  const std::size_t n = a.size();
  std::vector<std::vector<std::uint8_t>> inv(n, std::vector<std::uint8_t>(n, 0));
  for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    while (pivot < n && a[pivot][col] == 0) ++pivot;
    if (pivot == n) return false;
    std::swap(a[pivot], a[col]);
    std::swap(inv[pivot], inv[col]);
    const std::uint8_t scale = gf256::inv(a[col][col]);
    for (std::size_t j = 0; j < n; ++j) {
      a[col][j] = gf256::mul(a[col][j], scale);
      inv[col][j] = gf256::mul(inv[col][j], scale);
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col || a[r][col] == 0) continue;
      const std::uint8_t f = a[r][col];
      for (std::size_t j = 0; j < n; ++j) {
        a[r][j] ^= gf256::mul(f, a[col][j]);
        inv[r][j] ^= gf256::mul(f, inv[col][j]);
      }
    }
  }
  a = std::move(inv);
  return true;
}

}  // namespace

bool ec_decodable(const EcGeometry& g, const std::vector<bool>& present) {
  if (present.size() != g.total()) throw std::invalid_argument("ec_decodable: wrong mask length");
  if (g.code == EcCode::kMds) {
    std::uint32_t n = 0;
    for (bool b : present) n += b ? 1 : 0;
    return n >= g.data_blocks;
  }
  std::vector<std::uint32_t> missing(g.parity_blocks, 0);
  for (std::uint32_t j = 0; j < g.data_blocks; ++j) {
    if (!present[j]) ++missing[j % g.parity_blocks];
  }
  for (std::uint32_t i = 0; i < g.parity_blocks; ++i) {
    if (!present[g.data_blocks + i]) ++missing[i];
    // A lost parity alone is harmless; a lost parity plus a lost data block is not.
    if (missing[i] > 1) return false;
  }
  return true;
}

std::vector<std::vector<std::byte>> ec_encode(const EcGeometry& g, std::span<const std::span<const std::byte>> data) {
  check_geometry(g);
  if (data.size() != g.data_blocks) throw std::invalid_argument("ec_encode: expected " + std::to_string(g.data_blocks) + " data blocks");
  const std::size_t len = common_length(data);
  std::vector<std::vector<std::byte>> parity(g.parity_blocks, std::vector<std::byte>(len, std::byte{0}));
  for (std::uint32_t i = 0; i < g.parity_blocks; ++i) {
    for (std::uint32_t j = 0; j < g.data_blocks; ++j) {
      if (g.code == EcCode::kXor) {
        if (j % g.parity_blocks == i) gf256::mul_add(parity[i], data[j], 1);
      } else {
        gf256::mul_add(parity[i], data[j], cauchy_coefficient(g, i, j));
      }
    }
  }
  return parity;
}

std::vector<std::vector<std::byte>> ec_encode(const EcConfig& cfg, std::span<const std::span<const std::byte>> data) {
  cfg.validate();
  if (data.size() != cfg.k) throw std::invalid_argument("ec_encode: expected k data blocks");
  return ec_encode(EcGeometry{cfg.k, cfg.m, cfg.code}, data);
}

std::optional<std::vector<std::vector<std::byte>>> ec_decode(const EcGeometry& g, std::span<const IndexedBlock> present) {
  check_geometry(g);
  std::vector<const IndexedBlock*> by_index(g.total(), nullptr);
  std::size_t len = 0;
  bool have_len = false;
  for (const auto& b : present) {
    if (b.index >= g.total()) throw std::invalid_argument("ec_decode: block index out of range");
    if (by_index[b.index]) throw std::invalid_argument("ec_decode: duplicate block index");
    if (have_len && b.bytes.size() != len) throw std::invalid_argument("ec_decode: blocks must have equal length");
    len = b.bytes.size();
    have_len = true;
    by_index[b.index] = &b;
  }
  std::vector<bool> mask(g.total());
  for (std::uint32_t i = 0; i < g.total(); ++i) mask[i] = by_index[i] != nullptr;
  if (!ec_decodable(g, mask)) return std::nullopt;

  std::vector<std::vector<std::byte>> out(g.data_blocks);
  std::vector<std::uint32_t> erased;
  for (std::uint32_t j = 0; j < g.data_blocks; ++j) {
    if (by_index[j]) {
      out[j].assign(by_index[j]->bytes.begin(), by_index[j]->bytes.end());
    } else {
      out[j].assign(len, std::byte{0});
      erased.push_back(j);
    }
  }
  if (erased.empty()) return out;

  if (g.code == EcCode::kXor) {
    for (std::uint32_t j : erased) {
      const std::uint32_t grp = j % g.parity_blocks;
      gf256::mul_add(out[j], by_index[g.data_blocks + grp]->bytes, 1);
      for (std::uint32_t o = grp; o < g.data_blocks; o += g.parity_blocks) {
        if (o != j) gf256::mul_add(out[j], out[o], 1);
      }
    }
    return out;
  }

  // MDS: pick one present parity row per erasure, fold known data into the
  // syndromes, then solve the Cauchy subsystem.
  std::vector<std::uint32_t> rows;
  for (std::uint32_t i = 0; i < g.parity_blocks && rows.size() < erased.size(); ++i) {
    if (by_index[g.data_blocks + i]) rows.push_back(i);
  }
  const std::size_t e = erased.size();
  std::vector<std::vector<std::byte>> syndrome(e);
  for (std::size_t r = 0; r < e; ++r) {
    syndrome[r].assign(by_index[g.data_blocks + rows[r]]->bytes.begin(), by_index[g.data_blocks + rows[r]]->bytes.end());
    for (std::uint32_t j = 0; j < g.data_blocks; ++j) {
      if (by_index[j]) gf256::mul_add(syndrome[r], out[j], cauchy_coefficient(g, rows[r], j));
    }
  }
  std::vector<std::vector<std::uint8_t>> a(e, std::vector<std::uint8_t>(e));
  for (std::size_t r = 0; r < e; ++r) {
    for (std::size_t c = 0; c < e; ++c) a[r][c] = cauchy_coefficient(g, rows[r], erased[c]);
  }
  if (!invert(a)) throw std::logic_error("ec_decode: singular Cauchy submatrix");
  for (std::size_t c = 0; c < e; ++c) {
    for (std::size_t r = 0; r < e; ++r) gf256::mul_add(out[erased[c]], syndrome[r], a[c][r]);
  }
  return out;
}

std::optional<std::vector<std::vector<std::byte>>> ec_decode(const EcConfig& cfg, std::span<const IndexedBlock> present) {
  cfg.validate();
  return ec_decode(EcGeometry{cfg.k, cfg.m, cfg.code}, present);
}

}  // namespace sdr
