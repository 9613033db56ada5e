#pragma once

// Closed-form completion-time models. Times are in seconds (double) so that
// sub-nanosecond injection times stay exact.

#include <cstdint>

#include "sdr/ec_codec.hpp"
#include "sdr/simnet.hpp"

namespace sdr {

/// Serialization time of one chunk. Throws std::invalid_argument on a
/// non-positive bandwidth or zero chunk size.
double t_inj(std::uint64_t chunk_bytes, double bandwidth_bits_per_sec);

/// 1 - (1 - p)^n: a chunk of n packets survives only if every packet does.
double chunk_drop_prob(double p_packet, std::uint64_t packets_per_chunk);

struct SrModelParams {
  std::uint64_t M = 1;  // chunks
  double t_inj = 0.0;
  double rtt = 0.0;
  double rto = 0.0;
  double p_drop = 0.0;  // per chunk

  /// Cost of one drop: the timeout plus reinjection.
  double overhead() const { return rto + t_inj; }
  /// Throws std::invalid_argument naming the field.
  void validate() const;

  /// Chunk-level parameters for a channel; p_chunk is the chunk drop probability.
  static SrModelParams from_channel(std::uint64_t chunks, std::uint64_t chunk_bytes, const ChannelParams& ch,
                                    double rto_seconds, double p_chunk);
};

struct SrEstimate {
  double value = 0.0;
  /// Set when M * t_inj > rto: the model ignores queueing of retransmissions
  /// behind first transmissions, so the value only bounds the true mean from below.
  bool lower_bound = false;
};

/// E[max_i X_i] + rtt with X_i = i*t_inj + O*(Y_i - 1), Y_i geometric. Exact
/// on the value lattice; the tail is cut once P(max > x) < truncation.
/// M = 0 gives 0. Throws std::invalid_argument for p_drop >= 1.
SrEstimate e_t_sr_analytical(const SrModelParams& params, double truncation = 1e-12);

/// Probability that k data + m parity blocks, each lost with probability p,
/// still decode under an MDS code.
double p_ec_mds(std::uint32_t k, std::uint32_t m, double p);
/// Same for the XOR modulo-group code; requires m | k.
double p_ec_xor(std::uint32_t k, std::uint32_t m, double p);
/// XOR code with uneven groups (shortened submessages): data block j joins
/// group j % parity_blocks.
double p_ec_xor_groups(std::uint32_t data_blocks, std::uint32_t parity_blocks, double p);
double p_ec(const EcGeometry& g, double p);

struct EcModelParams {
  std::uint64_t M = 1;  // data chunks
  EcConfig code;
  double p_drop = 0.0;  // per chunk
  double beta = 1.0;
  double rtt = 0.0;
  double t_inj = 0.0;

  void validate() const;
  std::uint32_t submessages() const;
  EcGeometry geometry(std::uint32_t s) const;
  /// ceil(M * m / k)
  std::uint64_t parity_chunks() const;
  /// Expected number of undecodable data submessages.
  double expected_failures() const;
  /// Probability that at least one submessage fails.
  double p_fallback() const;
  /// (M + ceil(M/R)) * t_inj + beta * rtt
  double fto() const;
};

/// Lower bound on the EC Write time: base injection, fallback signalling
/// weighted by its probability, and an SR retransmission of
/// ceil(E[failures] * k) chunks. `sr` supplies rto (its M and p_drop are replaced).
double e_t_ec_lower(const EcModelParams& ec, const SrModelParams& sr);

struct AllreduceParams {
  std::uint32_t N = 1;
  double C = 0.0;
  double mu_X = 0.0;
};

/// (2N - 2) * (C + mu_X)
double allreduce_lower_bound(const AllreduceParams& params);

}  // namespace sdr
