#pragma once

// Stochastic completion-time samplers for SR and EC Writes. Times in seconds.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sdr/models.hpp"
#include "sdr/rng.hpp"
#include "sdr/sr.hpp"

namespace sdr {

struct CompletionStats {
  std::size_t n_samples = 0;
  double mean = 0.0;
  double p50 = 0.0;
  double p99 = 0.0;
  double p999 = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::uint64_t seed = 0;
};

/// Nearest-rank percentile of sorted samples: the ceil(q * n)-th smallest.
double nearest_rank(std::span<const double> sorted, double q);

/// Throws std::invalid_argument on an empty sample set.
CompletionStats summarize(std::vector<double> samples, std::uint64_t seed = 0);

/// Transmissions until the first success, P(Y = 1) = 1 - p. Inverse CDF
/// ceil(ln U / ln p), capped where p^Y drops below 1e-15.
std::uint64_t sample_geometric(double p, Rng& rng);

/// Survivors before the next drop in an i.i.d. Bernoulli(p) sequence;
/// UINT64_MAX when p == 0.
std::uint64_t sample_gap(double p, Rng& rng);

/// max_i (i*t_inj + O*(Y_i - 1)) + rtt. Only dropped chunks are visited, so
/// the cost is proportional to the number of drops rather than M.
double sample_t_sr(const SrModelParams& params, Rng& rng);

struct EcSample {
  double time = 0.0;
  bool fallback = false;
  /// No chunk arrived, so the fallback timer never armed and the sender gave
  /// up at the global timeout; `time` is that timeout.
  bool aborted = false;
  std::uint32_t failed_submessages = 0;
};

/// One EC Write. Chunks are injected as D0 P0 D1 P1 ...; a fully decodable
/// message completes at (M + parity) * t_inj + rtt. Otherwise the receiver's
/// fallback timer starts when the first surviving chunk lands, the NACK
/// returns after fto, and the failed data submessages go through SR.
/// `sr` provides rto for the fallback.
EcSample sample_t_ec(const EcModelParams& ec, const SrModelParams& sr, Rng& rng);

/// Outcome of one EC Write for a given set of lost chunks (ascending
/// injection indices over data and parity); only the SR fallback is random.
EcSample ec_outcome(const EcModelParams& ec, const SrModelParams& sr, std::span<const std::uint64_t> lost, Rng& rng);

struct McResult {
  CompletionStats stats;
  std::uint64_t fallbacks = 0;
  std::uint64_t aborts = 0;
  std::vector<double> samples;  // in trial order
};

/// Trial t draws from Rng::substream(seed, t), so results do not depend on
/// the thread count and trial t sees the same stream for every parameter set.
McResult run_sr_mc(const SrModelParams& params, std::size_t trials, std::uint64_t seed, unsigned threads = 1);
McResult run_ec_mc(const EcModelParams& ec, const SrModelParams& sr, std::size_t trials, std::uint64_t seed,
                   unsigned threads = 1);

// Reliability scheme for one Write.
struct Scheme {
  enum class Kind { kSrRto, kSrNack, kEc };
  Kind kind = Kind::kSrRto;
  EcConfig ec;  // used when kind == kEc

  static Scheme sr(SrVariant v = SrVariant::kRto) { return {v == SrVariant::kRto ? Kind::kSrRto : Kind::kSrNack, {}}; }
  static Scheme erasure(EcConfig c) { return {Kind::kEc, c}; }
  /// "sr_rto", "sr_nack", "ec_mds", "ec_xor"
  std::string name() const;
  /// Accepts name(); throws std::invalid_argument otherwise.
  static Scheme parse(std::string_view name, EcConfig ec = {});
  bool is_ec() const { return kind == Kind::kEc; }
  /// Variant used for the whole Write (SR) or for the fallback (EC).
  SrVariant sr_variant() const { return kind == Kind::kSrNack ? SrVariant::kNack : SrVariant::kRto; }
};

/// A channel plus chunking. channel.p_drop is per packet when `p_per_packet`,
/// otherwise it is taken directly as the chunk drop probability.
struct Scenario {
  ChannelParams channel;
  std::uint64_t chunk_bytes = 65536;
  std::uint32_t packets_per_chunk = 16;
  bool p_per_packet = true;

  double p_chunk() const;
  double t_inj() const;
  double rto_seconds(SrVariant v) const;
  /// M * t_inj + rtt
  double lossless(std::uint64_t chunks) const;
  SrModelParams sr_params(std::uint64_t chunks, SrVariant v) const;
  EcModelParams ec_params(std::uint64_t chunks, const EcConfig& code) const;
};

/// One Write of `chunks` chunks under `scheme`.
EcSample sample_write(const Scenario& sc, const Scheme& scheme, std::uint64_t chunks, Rng& rng);

McResult run_write_mc(const Scenario& sc, const Scheme& scheme, std::uint64_t chunks, std::size_t trials,
                      std::uint64_t seed, unsigned threads = 1);

}  // namespace sdr
