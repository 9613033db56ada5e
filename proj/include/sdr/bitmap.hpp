#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace sdr {

/// Fixed-length bit array packed into 64-bit words.
class Bitmap {
 public:
  Bitmap() = default;
  explicit Bitmap(std::size_t bits) : bits_(bits), words_((bits + 63) / 64, 0) {}

  std::size_t size() const { return bits_; }
  bool empty() const { return bits_ == 0; }

  bool test(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1U; }
  bool operator[](std::size_t i) const { return test(i); }

  /// Sets bit i; returns true if it was previously clear.
  bool set(std::size_t i) {
    std::uint64_t& w = words_[i / 64];
    const std::uint64_t mask = std::uint64_t{1} << (i % 64);
    const bool was_clear = (w & mask) == 0;
    w |= mask;
    return was_clear;
  }

  void reset() { std::fill(words_.begin(), words_.end(), 0); }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
  }
  bool all() const { return count() == bits_; }
  bool none() const { return count() == 0; }

  /// Index of the first clear bit, or size() if every bit is set.
  std::size_t first_clear() const {
    for (std::size_t w = 0; w < words_.size(); ++w) {
      if (words_[w] != ~std::uint64_t{0}) {
        const std::size_t i = w * 64 + static_cast<std::size_t>(std::countr_one(words_[w]));
        return i < bits_ ? i : bits_;
      }
    }
    return bits_;
  }

  bool operator==(const Bitmap&) const = default;

 private:
  std::size_t bits_ = 0;
  std::vector<std::uint64_t> words_;
};

}  // namespace sdr
