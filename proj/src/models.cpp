#include "sdr/models.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdr {

namespace {

void check_prob(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string(what) + " must lie in [0, 1]");
}

// log C(n, i)
double log_binom(std::uint32_t n, std::uint32_t i) {
  return std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0);
}

// P(lo <= Binomial(n, p) <= hi)
double binom_range(std::uint32_t n, std::uint32_t lo, std::uint32_t hi, double p) {
  if (lo > hi || lo > n) return 0.0;
  hi = std::min(hi, n);
  if (p == 0.0) return lo == 0 ? 1.0 : 0.0;
  if (p == 1.0) return hi == n ? 1.0 : 0.0;
  double sum = 0.0;
  if (n <= 64) {
    double c = 1.0;  // C(n, i)
    for (std::uint32_t i = 0; i <= hi; ++i) {
      if (i >= lo) sum += c * std::pow(p, i) * std::pow(1.0 - p, n - i);
      c = c * (n - i) / (i + 1);
    }
    return sum;
  }
  const double lp = std::log(p), lq = std::log1p(-p);
  for (std::uint32_t i = lo; i <= hi; ++i) sum += std::exp(log_binom(n, i) + i * lp + (n - i) * lq);
  return sum;
}

// Failure probability of one XOR group of n blocks (two or more lost).
double xor_group_failure(std::uint32_t n, double p) { return binom_range(n, 2, n, p); }

// Failure probability of a submessage, computed from the failing tail so that
// tiny values keep their precision.
double ec_failure(const EcGeometry& g, double p) {
  if (g.code == EcCode::kMds) return binom_range(g.total(), g.parity_blocks + 1, g.total(), p);
  double log_ok = 0.0;
  for (std::uint32_t i = 0; i < g.parity_blocks; ++i) {
    const std::uint32_t d = g.data_blocks / g.parity_blocks + (i < g.data_blocks % g.parity_blocks ? 1 : 0);
    log_ok += std::log1p(-xor_group_failure(d + 1, p));
  }
  return -std::expm1(log_ok);
}

}  // namespace

double t_inj(std::uint64_t chunk_bytes, double bandwidth_bits_per_sec) {
  if (!(bandwidth_bits_per_sec > 0.0)) throw std::invalid_argument("bandwidth must be positive");
  if (chunk_bytes == 0) throw std::invalid_argument("chunk size must be positive");
  return static_cast<double>(chunk_bytes) * 8.0 / bandwidth_bits_per_sec;
}

double chunk_drop_prob(double p_packet, std::uint64_t packets_per_chunk) {
  check_prob(p_packet, "p_drop");
  return -std::expm1(static_cast<double>(packets_per_chunk) * std::log1p(-p_packet));
}

void SrModelParams::validate() const {
  if (!(t_inj >= 0.0)) throw std::invalid_argument("t_inj must be non-negative");
  if (!(rtt >= 0.0)) throw std::invalid_argument("rtt must be non-negative");
  if (!(rto >= 0.0)) throw std::invalid_argument("rto must be non-negative");
  if (!(overhead() > 0.0)) throw std::invalid_argument("rto + t_inj must be positive");
  check_prob(p_drop, "p_drop");
  if (p_drop >= 1.0) throw std::invalid_argument("p_drop must be below 1");
}

SrModelParams SrModelParams::from_channel(std::uint64_t chunks, std::uint64_t chunk_bytes, const ChannelParams& ch,
                                          double rto_seconds, double p_chunk) {
  SrModelParams s;
  s.M = chunks;
  s.t_inj = sdr::t_inj(chunk_bytes, ch.bandwidth_bits_per_sec);
  s.rtt = to_seconds(ch.rtt);
  s.rto = rto_seconds;
  s.p_drop = p_chunk;
  return s;
}

SrEstimate e_t_sr_analytical(const SrModelParams& prm, double truncation) {
  prm.validate();
  if (prm.M == 0) return {0.0, false};
  SrEstimate out;
  out.lower_bound = static_cast<double>(prm.M) * prm.t_inj > prm.rto;
  if (prm.p_drop == 0.0) {
    out.value = static_cast<double>(prm.M) * prm.t_inj + prm.rtt;
    return out;
  }

  // P(max <= x) = prod_i (1 - p^(j_i + 1)) where chunk i sits on level
  // j_i = floor((x - i*t_inj) / O). Walk the merged level-change points of
  // all chunks and integrate the survival 1 - P(max <= x).
  const double O = prm.overhead();
  const double p = prm.p_drop;
  std::vector<double> level_log;  // log(1 - p^(j+1))
  auto level = [&](std::size_t j) {
    while (level_log.size() <= j) {
      const double pj = std::pow(p, static_cast<double>(level_log.size() + 1));
      level_log.push_back(std::log1p(-pj));
    }
    return level_log[j];
  };

  struct Ev {
    double x;
    std::uint64_t i;  // chunk, 1-based
    std::uint64_t j;  // level entered
    bool operator>(const Ev& o) const { return x > o.x; }
  };
  std::priority_queue<Ev, std::vector<Ev>, std::greater<>> heap;
  auto at = [&](std::uint64_t i, std::uint64_t j) {
    return static_cast<double>(i) * prm.t_inj + static_cast<double>(j) * O;
  };
  heap.push({at(1, 0), 1, 0});

  // Chunks per level; the product is rebuilt from the counts so roundoff
  // from earlier (larger) factors cannot hold the survival above the cutoff.
  std::vector<std::uint64_t> count;
  std::size_t low = 0;  // lowest occupied level
  std::uint64_t entered = 0;
  double prev = 0.0;
  double area = 0.0;
  double survival = 1.0;
  while (!heap.empty()) {
    const Ev e = heap.top();
    heap.pop();
    area += survival * (e.x - prev);
    prev = e.x;
    if (count.size() <= e.j) count.resize(e.j + 1, 0);
    ++count[e.j];
    if (e.j == 0) {
      ++entered;
    } else {
      --count[e.j - 1];
    }
    while (low < count.size() && count[low] == 0 && entered == prm.M) ++low;
    if (e.i < prm.M) heap.push({at(e.i + 1, e.j), e.i + 1, e.j});
    if (e.i == 1) heap.push({at(1, e.j + 1), 1, e.j + 1});
    if (entered < prm.M) continue;
    double log_f = 0.0;
    for (std::size_t j = low; j < count.size(); ++j)
      if (count[j]) log_f += static_cast<double>(count[j]) * level(j);
    survival = -std::expm1(log_f);
    if (survival < truncation) break;
  }
  out.value = area + prm.rtt;
  return out;
}

double p_ec_mds(std::uint32_t k, std::uint32_t m, double p) {
  check_prob(p, "p_drop");
  return binom_range(k + m, 0, m, p);
}

double p_ec_xor(std::uint32_t k, std::uint32_t m, double p) {
  check_prob(p, "p_drop");
  if (m == 0 || k % m != 0) throw std::invalid_argument("xor code needs m to divide k");
  const std::uint32_t n = k / m + 1;
  const double q = 1.0 - p;
  const double g = std::pow(q, n) + n * p * std::pow(q, n - 1);
  return std::pow(g, m);
}

double p_ec_xor_groups(std::uint32_t data_blocks, std::uint32_t parity_blocks, double p) {
  check_prob(p, "p_drop");
  if (data_blocks == 0 || parity_blocks == 0) throw std::invalid_argument("xor code needs data and parity blocks");
  double prod = 1.0;
  const double q = 1.0 - p;
  for (std::uint32_t i = 0; i < parity_blocks; ++i) {
    const std::uint32_t n = data_blocks / parity_blocks + (i < data_blocks % parity_blocks ? 1 : 0) + 1;
    prod *= std::pow(q, n) + n * p * std::pow(q, n - 1);
  }
  return prod;
}

double p_ec(const EcGeometry& g, double p) {
  return g.code == EcCode::kMds ? p_ec_mds(g.data_blocks, g.parity_blocks, p)
                                : p_ec_xor_groups(g.data_blocks, g.parity_blocks, p);
}

void EcModelParams::validate() const {
  if (M == 0) throw std::invalid_argument("M must be positive");
  code.validate();
  check_prob(p_drop, "p_drop");
  if (!(beta >= 0.0)) throw std::invalid_argument("beta must be non-negative");
  if (!(rtt >= 0.0)) throw std::invalid_argument("rtt must be non-negative");
  if (!(t_inj >= 0.0)) throw std::invalid_argument("t_inj must be non-negative");
}

std::uint32_t EcModelParams::submessages() const { return static_cast<std::uint32_t>((M + code.k - 1) / code.k); }

EcGeometry EcModelParams::geometry(std::uint32_t s) const {
  return geometry_for(static_cast<std::uint32_t>(std::min<std::uint64_t>(code.k, M - std::uint64_t{s} * code.k)), code);
}

std::uint64_t EcModelParams::parity_chunks() const { return (M * code.m + code.k - 1) / code.k; }

double EcModelParams::expected_failures() const {
  validate();
  const std::uint64_t full = M / code.k;
  double e = static_cast<double>(full) * ec_failure(geometry_for(code.k, code), p_drop);
  if (M % code.k) e += ec_failure(geometry(submessages() - 1), p_drop);
  return e;
}

double EcModelParams::p_fallback() const {
  validate();
  const std::uint64_t full = M / code.k;
  double log_ok = static_cast<double>(full) * std::log1p(-ec_failure(geometry_for(code.k, code), p_drop));
  if (M % code.k) log_ok += std::log1p(-ec_failure(geometry(submessages() - 1), p_drop));
  return -std::expm1(log_ok);
}

double EcModelParams::fto() const {
  return static_cast<double>(M + parity_chunks()) * t_inj + beta * rtt;
}

double e_t_ec_lower(const EcModelParams& ec, const SrModelParams& sr) {
  ec.validate();
  const double base = static_cast<double>(ec.M + ec.parity_chunks()) * ec.t_inj;
  const double signal = ec.p_fallback() * (ec.rtt + ec.beta * ec.rtt);
  SrModelParams sub = sr;
  sub.p_drop = ec.p_drop;
  sub.M = static_cast<std::uint64_t>(std::ceil(ec.expected_failures() * ec.code.k));
  const double retx = e_t_sr_analytical(sub).value;
  return base + signal + retx;
}

double allreduce_lower_bound(const AllreduceParams& a) {
  if (a.N < 1) throw std::invalid_argument("N must be at least 1");
  if (!(a.C >= 0.0) || !(a.mu_X >= 0.0)) throw std::invalid_argument("C and mu_X must be non-negative");
  return (2.0 * a.N - 2.0) * (a.C + a.mu_X);
}

}  // namespace sdr
