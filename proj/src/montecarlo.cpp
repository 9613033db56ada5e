#include "sdr/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace sdr {

double nearest_rank(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("nearest_rank: no samples");
  const auto n = sorted.size();
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return sorted[rank - 1];
}

CompletionStats summarize(std::vector<double> samples, std::uint64_t seed) {
  if (samples.empty()) throw std::invalid_argument("summarize: no samples");
  std::sort(samples.begin(), samples.end());
  CompletionStats s;
  s.n_samples = samples.size();
  s.seed = seed;
  s.min = samples.front();
  s.max = samples.back();
  // sorted summation: order-independent result
  s.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
  s.mean = std::clamp(s.mean, s.min, s.max);
  s.p50 = nearest_rank(samples, 0.5);
  s.p99 = nearest_rank(samples, 0.99);
  s.p999 = nearest_rank(samples, 0.999);
  return s;
}

std::uint64_t sample_geometric(double p, Rng& rng) {
  if (p <= 0.0) return 1;
  if (p >= 1.0) throw std::invalid_argument("sample_geometric: p must be below 1");
  const double lp = std::log(p);
  const double cap = std::ceil(std::log(1e-15) / lp);
  const double y = std::ceil(std::log(rng.uniform_open0()) / lp);
  return static_cast<std::uint64_t>(std::clamp(y, 1.0, cap));
}

std::uint64_t sample_gap(double p, Rng& rng) {
  if (p <= 0.0) return std::numeric_limits<std::uint64_t>::max();
  if (p >= 1.0) return 0;
  const double g = std::floor(std::log(rng.uniform_open0()) / std::log1p(-p));
  if (g >= 1.8e19) return std::numeric_limits<std::uint64_t>::max();
  return static_cast<std::uint64_t>(g);
}

namespace {

// Visits the 0-based indices of dropped items among n.
template <typename F>
void for_each_drop(std::uint64_t n, double p, Rng& rng, F&& f) {
  std::uint64_t i = 0;
  for (;;) {
    const std::uint64_t gap = sample_gap(p, rng);
    if (gap >= n - i) return;
    i += gap;
    f(i);
    if (++i >= n) return;
  }
}

}  // namespace

double sample_t_sr(const SrModelParams& prm, Rng& rng) {
  if (prm.M == 0) return 0.0;
  if (prm.p_drop >= 1.0) throw std::invalid_argument("sample_t_sr: p_drop must be below 1");
  const double O = prm.overhead();
  double mx = static_cast<double>(prm.M) * prm.t_inj;
  for_each_drop(prm.M, prm.p_drop, rng, [&](std::uint64_t i) {
    // dropped at least once; memoryless for the remaining attempts
    const std::uint64_t y = 1 + sample_geometric(prm.p_drop, rng);
    mx = std::max(mx, static_cast<double>(i + 1) * prm.t_inj + O * static_cast<double>(y - 1));
  });
  return mx + prm.rtt;
}

EcSample sample_t_ec(const EcModelParams& ec, const SrModelParams& sr, Rng& rng) {
  thread_local std::vector<std::uint64_t> lost;
  lost.clear();
  for_each_drop(ec.M + ec.parity_chunks(), ec.p_drop, rng, [&](std::uint64_t pos) { lost.push_back(pos); });
  return ec_outcome(ec, sr, lost, rng);
}

EcSample ec_outcome(const EcModelParams& ec, const SrModelParams& sr, std::span<const std::uint64_t> lost, Rng& rng) {
  const std::uint32_t stride = ec.code.k + ec.code.m;
  const std::uint64_t total = ec.M + ec.parity_chunks();
  EcSample out;

  for (std::size_t j = 0; j < lost.size(); ++j)
    if (lost[j] >= total || (j > 0 && lost[j] <= lost[j - 1]))
      throw std::invalid_argument("ec_outcome: lost indices must be ascending and in range");

  // first chunk that survives, in injection order
  std::uint64_t first_alive = 0;
  for (auto pos : lost) {
    if (pos != first_alive) break;
    ++first_alive;
  }

  std::uint64_t failed_chunks = 0;
  std::size_t i = 0;
  std::vector<std::uint32_t> group;
  while (i < lost.size()) {
    const auto s = static_cast<std::uint32_t>(lost[i] / stride);
    const EcGeometry g = ec.geometry(s);
    std::uint32_t n = 0;
    bool broken = false;
    if (g.code == EcCode::kXor) group.assign(g.parity_blocks, 0);
    for (; i < lost.size() && lost[i] / stride == s; ++i) {
      ++n;
      if (g.code == EcCode::kXor) {
        const auto r = static_cast<std::uint32_t>(lost[i] % stride);
        const std::uint32_t gi = r < g.data_blocks ? r % g.parity_blocks : r - g.data_blocks;
        if (++group[gi] > 1) broken = true;
      }
    }
    if (g.code == EcCode::kMds) broken = n > g.parity_blocks;
    if (broken) {
      ++out.failed_submessages;
      failed_chunks += g.data_blocks;
    }
  }

  if (out.failed_submessages == 0) {
    out.time = static_cast<double>(total) * ec.t_inj + ec.rtt;
    return out;
  }
  out.fallback = true;
  if (first_alive >= total) {
    out.aborted = true;
    out.time = 4.0 * ec.fto() + 4.0 * ec.rtt;
    return out;
  }
  SrModelParams sub = sr;
  sub.M = failed_chunks;
  sub.p_drop = ec.p_drop;
  // first arrival at (f+1)*t_inj + rtt/2, timer fto, NACK back after rtt/2
  const double nack_at = static_cast<double>(first_alive + 1) * ec.t_inj + ec.fto() + ec.rtt;
  out.time = nack_at + sample_t_sr(sub, rng);
  return out;
}

namespace {

template <typename F>
McResult run_trials(std::size_t trials, std::uint64_t seed, unsigned threads, F&& one) {
  if (trials == 0) throw std::invalid_argument("trials must be at least 1");
  McResult res;
  res.samples.assign(trials, 0.0);
  std::vector<std::uint8_t> fb(trials, 0), ab(trials, 0);
  auto work = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t t = lo; t < hi; ++t) {
      Rng rng = Rng::substream(seed, t);
      one(rng, res.samples[t], fb[t], ab[t]);
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
  res.fallbacks = static_cast<std::uint64_t>(std::count(fb.begin(), fb.end(), 1));
  res.aborts = static_cast<std::uint64_t>(std::count(ab.begin(), ab.end(), 1));
  res.stats = summarize(res.samples, seed);
  return res;
}

}  // namespace

McResult run_sr_mc(const SrModelParams& params, std::size_t trials, std::uint64_t seed, unsigned threads) {
  params.validate();
  return run_trials(trials, seed, threads, [&](Rng& rng, double& out, std::uint8_t&, std::uint8_t&) {
    out = sample_t_sr(params, rng);
  });
}

McResult run_ec_mc(const EcModelParams& ec, const SrModelParams& sr, std::size_t trials, std::uint64_t seed,
                   unsigned threads) {
  ec.validate();
  if (ec.p_drop >= 1.0) throw std::invalid_argument("p_drop must be below 1");
  return run_trials(trials, seed, threads, [&](Rng& rng, double& out, std::uint8_t& fb, std::uint8_t& ab) {
    const EcSample s = sample_t_ec(ec, sr, rng);
    out = s.time;
    fb = s.fallback;
    ab = s.aborted;
  });
}

std::string Scheme::name() const {
  switch (kind) {
    case Kind::kSrRto: return "sr_rto";
    case Kind::kSrNack: return "sr_nack";
    case Kind::kEc: return ec.code == EcCode::kMds ? "ec_mds" : "ec_xor";
  }
  return "?";
}

Scheme Scheme::parse(std::string_view name, EcConfig ec) {
  if (name == "sr_rto") return sr(SrVariant::kRto);
  if (name == "sr_nack") return sr(SrVariant::kNack);
  if (name == "ec_mds" || name == "ec_xor") {
    ec.code = name == "ec_mds" ? EcCode::kMds : EcCode::kXor;
    ec.validate();
    return erasure(ec);
  }
  throw std::invalid_argument("unknown scheme '" + std::string(name) + "' (sr_rto, sr_nack, ec_mds, ec_xor)");
}

double Scenario::p_chunk() const {
  return p_per_packet ? chunk_drop_prob(channel.p_drop, packets_per_chunk) : channel.p_drop;
}

double Scenario::t_inj() const { return sdr::t_inj(chunk_bytes, channel.bandwidth_bits_per_sec); }

double Scenario::rto_seconds(SrVariant v) const {
  const double rtt = to_seconds(channel.rtt);
  return v == SrVariant::kNack ? rtt : (1.0 + channel.alpha) * rtt;
}

double Scenario::lossless(std::uint64_t chunks) const {
  return static_cast<double>(chunks) * t_inj() + to_seconds(channel.rtt);
}

SrModelParams Scenario::sr_params(std::uint64_t chunks, SrVariant v) const {
  return SrModelParams::from_channel(chunks, chunk_bytes, channel, rto_seconds(v), p_chunk());
}

EcModelParams Scenario::ec_params(std::uint64_t chunks, const EcConfig& code) const {
  EcModelParams e;
  e.M = chunks;
  e.code = code;
  e.p_drop = p_chunk();
  e.beta = channel.beta;
  e.rtt = to_seconds(channel.rtt);
  e.t_inj = t_inj();
  return e;
}

EcSample sample_write(const Scenario& sc, const Scheme& scheme, std::uint64_t chunks, Rng& rng) {
  const SrModelParams sr = sc.sr_params(chunks, scheme.sr_variant());
  if (!scheme.is_ec()) {
    EcSample s;
    s.time = sample_t_sr(sr, rng);
    return s;
  }
  return sample_t_ec(sc.ec_params(chunks, scheme.ec), sr, rng);
}

McResult run_write_mc(const Scenario& sc, const Scheme& scheme, std::uint64_t chunks, std::size_t trials,
                      std::uint64_t seed, unsigned threads) {
  if (scheme.is_ec()) {
    return run_ec_mc(sc.ec_params(chunks, scheme.ec), sc.sr_params(chunks, scheme.sr_variant()), trials, seed,
                     threads);
  }
  return run_sr_mc(sc.sr_params(chunks, scheme.sr_variant()), trials, seed, threads);
}

}  // namespace sdr

