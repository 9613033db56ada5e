#include "sdr/collectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "sdr/ec.hpp"

namespace sdr {

StageSampler stochastic_stage(const Scenario& sc, const Scheme& scheme) {
  return [sc, scheme](std::uint64_t chunks, Rng& rng) {
    if (chunks == 0) return 0.0;
    return sample_write(sc, scheme, chunks, rng).time;
  };
}

StageSampler event_stage(const Scenario& sc, const Scheme& scheme) {
  if (sc.chunk_bytes % sc.packets_per_chunk != 0) throw std::invalid_argument("chunk_bytes must split into packets");
  TransferOptions base;
  base.link.channel = sc.channel;
  if (!sc.p_per_packet) base.link.channel.p_drop = 1.0 - std::pow(1.0 - sc.channel.p_drop, 1.0 / sc.packets_per_chunk);
  base.link.qp.mtu_bytes = static_cast<std::uint32_t>(sc.chunk_bytes / sc.packets_per_chunk);
  base.link.qp.chunk_size_packets = sc.packets_per_chunk;
  base.sr.variant = scheme.sr_variant();
  return [base, sc, scheme](std::uint64_t chunks, Rng& rng) {
    if (chunks == 0) return 0.0;
    const std::uint64_t bytes = chunks * sc.chunk_bytes;
    if (!scheme.is_ec()) {
      TransferOptions o = base;
      o.link.seed = rng();
      return to_seconds(run_sr_transfer(o, bytes).completion);
    }
    EcTransferOptions o;
    static_cast<TransferOptions&>(o) = base;
    o.link.seed = rng();
    o.ec = scheme.ec;
    try {
      return to_seconds(run_ec_transfer(o, bytes).completion);
    } catch (const TimeoutError&) {
      // same convention as the stochastic sampler: charge the global timeout
      const auto layout = EcLayout::make(bytes, sc.chunk_bytes, scheme.ec);
      return to_seconds(EcTimers::defaults(layout, sc.channel).global_timeout);
    }
  };
}

double RingState::completion() const {
  if (finish.empty()) return 0.0;
  return *std::max_element(finish.back().begin(), finish.back().end());
}

double RingState::mean_stage() const {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& row : stage) {
    sum += std::accumulate(row.begin(), row.end(), 0.0);
    n += row.size();
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

std::uint32_t ring_slice(std::uint32_t N, std::uint32_t i, std::uint32_t r) {
  // reduce-scatter: node i forwards slice i - r; allgather: slice i + 1 - r'
  const std::int64_t n = N;
  std::int64_t j = r < N - 1 ? std::int64_t{i} - r : std::int64_t{i} + 1 - (std::int64_t{r} - (n - 1));
  return static_cast<std::uint32_t>(((j % n) + n) % n);
}

std::uint64_t ring_slice_chunks(std::uint32_t N, std::uint64_t buffer_chunks, std::uint32_t j) {
  const std::uint64_t step = (buffer_chunks + N - 1) / N;
  const std::uint64_t start = std::uint64_t{j} * step;
  if (start >= buffer_chunks) return 0;
  return std::min(step, buffer_chunks - start);
}

RingState ring_recurrence(std::vector<std::vector<double>> stage) {
  RingState s;
  if (stage.empty()) return s;
  s.N = static_cast<std::uint32_t>(stage.front().size());
  s.finish.assign(stage.size() + 1, std::vector<double>(s.N, 0.0));
  for (std::size_t r = 1; r <= stage.size(); ++r) {
    if (stage[r - 1].size() != s.N) throw std::invalid_argument("ring_recurrence: ragged stage matrix");
    for (std::uint32_t i = 0; i < s.N; ++i) {
      const std::uint32_t prev = (i + s.N - 1) % s.N;
      s.finish[r][i] = std::max(s.finish[r - 1][prev], s.finish[r - 1][i]) + stage[r - 1][i];
    }
  }
  s.stage = std::move(stage);
  return s;
}

RingState ring_allreduce_run(std::uint32_t N, std::uint64_t buffer_chunks, const StageSampler& sampler, Rng& rng) {
  if (N < 2) return RingState{N, 0, {}, {}};
  const std::uint32_t rounds = 2 * N - 2;
  std::vector<std::vector<double>> stage(rounds, std::vector<double>(N));
  for (std::uint32_t r = 0; r < rounds; ++r)
    for (std::uint32_t i = 0; i < N; ++i) stage[r][i] = sampler(ring_slice_chunks(N, buffer_chunks, ring_slice(N, i, r)), rng);
  RingState s = ring_recurrence(std::move(stage));
  s.step_message_chunks = (buffer_chunks + N - 1) / N;
  return s;
}

double ring_allreduce_sim(std::uint32_t N, std::uint64_t buffer_chunks, const StageSampler& sampler, Rng& rng) {
  return ring_allreduce_run(N, buffer_chunks, sampler, rng).completion();
}

AllreduceResult run_allreduce_mc(std::uint32_t N, std::uint64_t buffer_chunks, const StageSampler& sampler,
                                 std::size_t trials, std::uint64_t seed, unsigned threads) {
  if (trials == 0) throw std::invalid_argument("trials must be at least 1");
  AllreduceResult res;
  res.samples.assign(trials, 0.0);
  std::vector<double> stage_means(trials, 0.0);
  auto work = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t t = lo; t < hi; ++t) {
      Rng rng = Rng::substream(seed, t);
      const RingState s = ring_allreduce_run(N, buffer_chunks, sampler, rng);
      res.samples[t] = s.completion();
      stage_means[t] = s.mean_stage();
    }
  };
  threads = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(trials)));
  if (threads == 1) {
    work(0, trials);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t per = (trials + threads - 1) / threads;
    for (unsigned w = 0; w < threads; ++w) {
      const std::size_t lo = w * per, hi = std::min(trials, lo + per);
      if (lo < hi) pool.emplace_back(work, lo, hi);
    }
  }
  std::sort(stage_means.begin(), stage_means.end());
  res.mean_stage = std::accumulate(stage_means.begin(), stage_means.end(), 0.0) / static_cast<double>(trials);
  res.lower_bound = allreduce_lower_bound({N, res.mean_stage, 0.0});
  res.stats = summarize(res.samples, seed);
  return res;
}

SpeedupGrid speedup_grid(const Scenario& base, std::span<const std::uint64_t> buffer_chunks,
                         std::span<const double> drop_rates, std::span<const std::uint32_t> N_values,
                         std::span<const Scheme> schemes, std::size_t trials, std::uint64_t seed, unsigned threads) {
  if (buffer_chunks.empty() || drop_rates.empty() || N_values.empty() || schemes.empty())
    throw std::invalid_argument("speedup_grid: every axis needs at least one value");
  SpeedupGrid g;
  for (auto b : buffer_chunks)
    for (double p : drop_rates)
      for (auto N : N_values) {
        Scenario sc = base;
        sc.channel.p_drop = p;
        const std::size_t first = g.cells.size();
        for (const auto& scheme : schemes)
          g.cells.push_back({b, p, N, scheme, run_allreduce_mc(N, b, stochastic_stage(sc, scheme), trials, seed, threads)});
        const auto& ref = g.cells[first].result.stats;
        for (std::size_t s = 1; s < schemes.size(); ++s) {
          const auto& c = g.cells[first + s].result.stats;
          g.speedups.push_back({b, p, N, schemes[0], schemes[s], ref.mean / c.mean, ref.p999 / c.p999});
        }
      }
  return g;
}

}  // namespace sdr
