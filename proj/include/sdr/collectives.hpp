#pragma once

// Ring Allreduce over N datacenters: 2N-2 dependent rounds, each a Write of
// one buffer slice to the next node. Node i finishes round r at
//   T(i, r) = max(T(i-1, r-1), T(i, r-1)) + t(i, r-1),  T(i, 0) = 0.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "sdr/montecarlo.hpp"

namespace sdr {

/// Duration in seconds of one Write of `chunks` chunks. Must be safe to call
/// concurrently with distinct generators.
using StageSampler = std::function<double(std::uint64_t chunks, Rng&)>;

/// Draws from the stochastic Write model.
StageSampler stochastic_stage(const Scenario& sc, const Scheme& scheme);

/// Runs the full protocol over the event simulator without payload bytes.
/// Much slower; meant for cross-checking the stochastic model.
StageSampler event_stage(const Scenario& sc, const Scheme& scheme);

struct RingState {
  std::uint32_t N = 0;
  std::uint64_t step_message_chunks = 0;  // largest slice, ceil(buffer / N)
  /// finish[r][i] = T(i, r), r in [0, 2N-2]
  std::vector<std::vector<double>> finish;
  /// stage[r][i] = t(i, r), r in [0, 2N-2)
  std::vector<std::vector<double>> stage;

  double completion() const;
  /// Average of all stage durations: this trial's estimate of C + mu_X.
  double mean_stage() const;
};

/// Slice that node i sends in round r (0-based): reduce-scatter then allgather.
std::uint32_t ring_slice(std::uint32_t N, std::uint32_t i, std::uint32_t r);
/// Chunks in slice j: ceil(buffer / N), the last one holding the remainder.
std::uint64_t ring_slice_chunks(std::uint32_t N, std::uint64_t buffer_chunks, std::uint32_t j);

/// Applies the recurrence to given stage durations (stage[r][i]).
RingState ring_recurrence(std::vector<std::vector<double>> stage);

/// One Allreduce with all stages drawn from `sampler`. N < 2 gives an empty
/// state with completion 0.
RingState ring_allreduce_run(std::uint32_t N, std::uint64_t buffer_chunks, const StageSampler& sampler, Rng& rng);
double ring_allreduce_sim(std::uint32_t N, std::uint64_t buffer_chunks, const StageSampler& sampler, Rng& rng);

struct AllreduceResult {
  CompletionStats stats;
  /// Mean stage duration over every sampled stage (C + mu_X).
  double mean_stage = 0.0;
  /// (2N - 2) * mean_stage
  double lower_bound = 0.0;
  std::vector<double> samples;
};

/// Trial t uses Rng::substream(seed, t).
AllreduceResult run_allreduce_mc(std::uint32_t N, std::uint64_t buffer_chunks, const StageSampler& sampler,
                                 std::size_t trials, std::uint64_t seed, unsigned threads = 1);

struct AllreduceCell {
  std::uint64_t buffer_chunks = 0;
  double p_drop = 0.0;
  std::uint32_t N = 0;
  Scheme scheme;
  AllreduceResult result;
};

struct SpeedupRow {
  std::uint64_t buffer_chunks = 0;
  double p_drop = 0.0;
  std::uint32_t N = 0;
  Scheme baseline;
  Scheme candidate;
  double mean_speedup = 0.0;  // baseline mean / candidate mean
  double p999_speedup = 0.0;
};

struct SpeedupGrid {
  std::vector<AllreduceCell> cells;
  std::vector<SpeedupRow> speedups;
};

/// Every (buffer, p, N, scheme) cell with `trials` trials; schemes[0] is the
/// baseline the others are compared against. base.channel.p_drop is replaced
/// by each grid rate. All cells share `seed`, so trial t of every cell uses
/// the same stream. Throws std::invalid_argument on an empty axis.
SpeedupGrid speedup_grid(const Scenario& base, std::span<const std::uint64_t> buffer_chunks,
                         std::span<const double> drop_rates, std::span<const std::uint32_t> N_values,
                         std::span<const Scheme> schemes, std::size_t trials, std::uint64_t seed,
                         unsigned threads = 1);

}  // namespace sdr
