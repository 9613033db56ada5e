#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "sdr/ec.hpp"
#include "sdr/trace.hpp"

namespace sdrcli {

using nlohmann::json;

namespace {

const std::set<std::string> kScenarios{"model", "mc", "protocol", "allreduce", "sweep", "validate"};

[[noreturn]] void bad(const std::string& field, const std::string& why) {
  throw ConfigError(field + ": " + why);
}

template <typename T>
void take(const json& j, const char* key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception& e) {
    bad(key, std::string("wrong type (") + e.what() + ")");
  }
}

}  // namespace

const char* version() { return SDRSIM_VERSION; }

void ExperimentConfig::validate() const {
  if (!kScenarios.contains(scenario)) bad("scenario", "unknown '" + scenario + "'");
  if (!(bandwidth_bps > 0) || !std::isfinite(bandwidth_bps)) bad("bandwidth_bps", "must be positive");
  if (!(rtt_ms > 0) || !std::isfinite(rtt_ms)) bad("rtt_ms", "must be positive");
  if (!(alpha >= 0)) bad("alpha", "must be non-negative");
  if (!(beta >= 0)) bad("beta", "must be non-negative");
  if (!(jitter_us >= 0)) bad("jitter_us", "must be non-negative");
  if (chunk_bytes == 0) bad("chunk_bytes", "must be positive");
  if (packets_per_chunk == 0) bad("packets_per_chunk", "must be positive");
  if (chunk_bytes % packets_per_chunk != 0) bad("packets_per_chunk", "must divide chunk_bytes");
  if (drop_unit != "packet" && drop_unit != "chunk") bad("drop_unit", "expected 'packet' or 'chunk'");
  if (schemes.empty()) bad("schemes", "empty");
  for (const auto& s : schemes) {
    try {
      (void)scheme(s);
    } catch (const std::invalid_argument& e) {
      bad("schemes", e.what());
    }
  }
  if (message_bytes.empty()) bad("message_bytes", "empty");
  for (auto b : message_bytes)
    if (b == 0) bad("message_bytes", "sizes must be positive");
  if (drop_rates.empty()) bad("drop_rates", "empty");
  for (double p : drop_rates)
    if (!(p >= 0 && p < 1)) bad("drop_rates", "values must lie in [0, 1)");
  if (datacenters.empty()) bad("datacenters", "empty");
  for (auto n : datacenters)
    if (n == 0) bad("datacenters", "values must be at least 1");
  if (trials == 0) bad("trials", "must be at least 1");
  if (threads == 0) bad("threads", "must be at least 1");
}

void ExperimentConfig::normalize() {
  auto uniq = [](auto& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  uniq(message_bytes);
  uniq(drop_rates);
  uniq(datacenters);
  uniq(force_drop);
  // scheme order is kept: the first one is the baseline for speedups
  std::vector<std::string> seen;
  for (const auto& s : schemes)
    if (std::find(seen.begin(), seen.end(), s) == seen.end()) seen.push_back(s);
  schemes = seen;
}

json ExperimentConfig::to_json() const {
  return json{{"scenario", scenario},
              {"bandwidth_bps", bandwidth_bps},
              {"rtt_ms", rtt_ms},
              {"alpha", alpha},
              {"beta", beta},
              {"jitter_us", jitter_us},
              {"chunk_bytes", chunk_bytes},
              {"packets_per_chunk", packets_per_chunk},
              {"drop_unit", drop_unit},
              {"schemes", schemes},
              {"k", k},
              {"m", m},
              {"message_bytes", message_bytes},
              {"drop_rates", drop_rates},
              {"datacenters", datacenters},
              {"trials", trials},
              {"seed", seed},
              {"threads", threads},
              {"event_driven", event_driven},
              {"force_drop", force_drop},
              {"output", output}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j, ExperimentConfig c) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  const json known = c.to_json();
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) bad(key, "unknown key");
  take(j, "scenario", c.scenario);
  take(j, "bandwidth_bps", c.bandwidth_bps);
  take(j, "rtt_ms", c.rtt_ms);
  take(j, "alpha", c.alpha);
  take(j, "beta", c.beta);
  take(j, "jitter_us", c.jitter_us);
  take(j, "chunk_bytes", c.chunk_bytes);
  take(j, "packets_per_chunk", c.packets_per_chunk);
  take(j, "drop_unit", c.drop_unit);
  take(j, "schemes", c.schemes);
  take(j, "k", c.k);
  take(j, "m", c.m);
  take(j, "message_bytes", c.message_bytes);
  take(j, "drop_rates", c.drop_rates);
  take(j, "datacenters", c.datacenters);
  take(j, "trials", c.trials);
  take(j, "seed", c.seed);
  take(j, "threads", c.threads);
  take(j, "event_driven", c.event_driven);
  take(j, "force_drop", c.force_drop);
  take(j, "output", c.output);
  return c;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) { return from_json(j, ExperimentConfig{}); }

std::uint64_t ExperimentConfig::hash() const {
  json j = to_json();
  j.erase("output");
  j.erase("threads");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

sdr::Scenario ExperimentConfig::scenario_for(double p) const {
  sdr::Scenario sc;
  sc.channel.bandwidth_bits_per_sec = bandwidth_bps;
  sc.channel.rtt = sdr::from_seconds(rtt_ms * 1e-3);
  sc.channel.alpha = alpha;
  sc.channel.beta = beta;
  sc.channel.reorder_jitter = sdr::from_seconds(jitter_us * 1e-6);
  sc.channel.p_drop = p;
  sc.chunk_bytes = chunk_bytes;
  sc.packets_per_chunk = packets_per_chunk;
  sc.p_per_packet = drop_unit == "packet";
  return sc;
}

sdr::Scheme ExperimentConfig::scheme(const std::string& name) const {
  return sdr::Scheme::parse(name, sdr::EcConfig{k, m, sdr::EcCode::kMds});
}

std::string fmt(double v) {
  if (v == 0) return "0";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 9);
  return std::string(buf, r.ptr);
}

std::string fmt(std::uint64_t v) { return std::to_string(v); }

namespace {

std::uint64_t parse_one_size(const std::string& s, const std::string& field) {
  static const std::map<std::string, std::uint64_t> units{
      {"", 1}, {"B", 1}, {"KiB", 1ULL << 10}, {"MiB", 1ULL << 20}, {"GiB", 1ULL << 30}, {"TiB", 1ULL << 40}};
  if (s.starts_with("2^")) {
    unsigned e = 0;
    auto r = std::from_chars(s.data() + 2, s.data() + s.size(), e);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size() || e > 62) bad(field, "bad power of two '" + s + "'");
    return std::uint64_t{1} << e;
  }
  std::uint64_t v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{}) bad(field, "bad size '" + s + "'");
  auto it = units.find(std::string(r.ptr, s.data() + s.size()));
  if (it == units.end()) bad(field, "unknown unit in '" + s + "'");
  return v * it->second;
}

double parse_double(const std::string& s, const std::string& field) {
  double v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) bad(field, "bad number '" + s + "'");
  return v;
}

}  // namespace

std::vector<std::uint64_t> parse_sizes(const std::vector<std::string>& items, const std::string& field) {
  std::vector<std::uint64_t> out;
  for (const auto& item : items) {
    const auto dots = item.find("..");
    if (dots == std::string::npos) {
      out.push_back(parse_one_size(item, field));
      continue;
    }
    const auto lo = parse_one_size(item.substr(0, dots), field);
    const auto hi = parse_one_size(item.substr(dots + 2), field);
    if (lo == 0 || (lo & (lo - 1)) || (hi & (hi - 1)) || hi < lo) bad(field, "range '" + item + "' needs powers of two");
    for (auto v = lo; v <= hi && v != 0; v <<= 1) out.push_back(v);
  }
  return out;
}

std::vector<double> parse_rates(const std::vector<std::string>& items, const std::string& field) {
  std::vector<double> out;
  for (const auto& item : items) {
    const auto dots = item.find("..");
    if (dots == std::string::npos) {
      out.push_back(parse_double(item, field));
      continue;
    }
    std::string rest = item.substr(dots + 2);
    int steps = 1;
    if (auto colon = rest.find(':'); colon != std::string::npos) {
      steps = static_cast<int>(parse_double(rest.substr(colon + 1), field));
      rest = rest.substr(0, colon);
    }
    const double lo = parse_double(item.substr(0, dots), field), hi = parse_double(rest, field);
    if (!(lo > 0) || hi < lo || steps < 1) bad(field, "bad range '" + item + "'");
    const double decades = std::log10(hi / lo);
    const int n = static_cast<int>(std::lround(decades * steps));
    for (int i = 0; i <= n; ++i) {
      // round to 12 significant digits so 1e-5 prints as 1e-05, not 9.99999999e-06
      const double v = lo * std::pow(10.0, static_cast<double>(i) / steps);
      char buf[64];
      auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific, 11);
      out.push_back(parse_double(std::string(buf, r.ptr), field));
    }
  }
  return out;
}

void write_csv(std::ostream& out, const ExperimentConfig& cfg, const CsvTable& t) {
  char hex[17];
  auto r = std::to_chars(hex, hex + 16, cfg.hash(), 16);
  const std::string h(hex, r.ptr);
  json j = cfg.to_json();
  j.erase("output");
  j.erase("threads");
  out << "# tool=sdrsim version=" << version() << '\n';
  out << "# subcommand=" << cfg.scenario << '\n';
  out << "# seed=" << cfg.seed << '\n';
  out << "# config_hash=fnv1a64:" << std::string(16 - h.size(), '0') << h << '\n';
  out << "# config=" << j.dump() << '\n';
  for (const auto& n : t.notes) out << "# " << n << '\n';
  for (std::size_t i = 0; i < t.columns.size(); ++i) out << (i ? "," : "") << t.columns[i];
  out << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  }
}

// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string> kCommon{"scheme", "message_bytes", "M", "chunk_bytes", "packets_per_chunk",
                                       "drop_unit", "p_drop", "p_chunk", "rtt_s", "bandwidth_bps",
                                       "alpha", "beta", "k", "m"};

std::vector<std::string> common(const ExperimentConfig& cfg, const std::string& scheme, std::uint64_t bytes, double p) {
  const auto sc = cfg.scenario_for(p);
  return {scheme,
          fmt(bytes),
          fmt(cfg.chunks(bytes)),
          fmt(cfg.chunk_bytes),
          fmt(std::uint64_t{cfg.packets_per_chunk}),
          cfg.drop_unit,
          fmt(p),
          fmt(sc.p_chunk()),
          fmt(cfg.rtt_ms * 1e-3),
          fmt(cfg.bandwidth_bps),
          fmt(cfg.alpha),
          fmt(cfg.beta),
          fmt(std::uint64_t{cfg.k}),
          fmt(std::uint64_t{cfg.m})};
}

std::vector<std::string> cols(std::initializer_list<const char*> extra) {
  auto c = kCommon;
  c.insert(c.end(), extra.begin(), extra.end());
  return c;
}

template <typename... S>
void append(std::vector<std::string>& row, S&&... cells) {
  (row.push_back(std::forward<S>(cells)), ...);
}

struct Analytic {
  double value;
  bool lower_bound;
  double p_fallback;
  double expected_failures;
};

Analytic analytic(const sdr::Scenario& sc, const sdr::Scheme& s, std::uint64_t M) {
  const auto sr = sc.sr_params(M, s.sr_variant());
  if (!s.is_ec()) {
    const auto e = sdr::e_t_sr_analytical(sr);
    return {e.value, e.lower_bound, 0.0, 0.0};
  }
  const auto ec = sc.ec_params(M, s.ec);
  return {sdr::e_t_ec_lower(ec, sr), true, ec.p_fallback(), ec.expected_failures()};
}

/// Row order: scheme (config order), size, p. The grids are sorted by normalize().
template <typename F>
void for_cells(const ExperimentConfig& cfg, F&& f) {
  for (const auto& name : cfg.schemes)
    for (auto bytes : cfg.message_bytes)
      for (double p : cfg.drop_rates) f(name, bytes, p);
}

}  // namespace

CsvTable run_model(const ExperimentConfig& cfg) {
  CsvTable t;
  t.columns = cols({"model_s", "model_kind", "lossless_s", "slowdown", "p_fallback", "expected_failures"});
  for_cells(cfg, [&](const std::string& name, std::uint64_t bytes, double p) {
    const auto sc = cfg.scenario_for(p);
    const auto M = cfg.chunks(bytes);
    const auto a = analytic(sc, cfg.scheme(name), M);
    auto row = common(cfg, name, bytes, p);
    append(row, fmt(a.value), a.lower_bound ? "lower_bound" : "exact", fmt(sc.lossless(M)), fmt(a.value / sc.lossless(M)),
           fmt(a.p_fallback), fmt(a.expected_failures));
    t.rows.push_back(std::move(row));
  });
  return t;
}

namespace {

CsvTable mc_table(const ExperimentConfig& cfg, bool with_model) {
  CsvTable t;
  t.columns = cols({"trials", "seed", "mean_s", "p50_s", "p99_s", "p999_s", "min_s", "max_s", "fallbacks", "aborts",
                    "lossless_s", "slowdown_mean", "slowdown_p999"});
  if (with_model) {
    const std::string base = cfg.schemes.front();
    for (auto c : {"model_s", "model_kind"}) t.columns.push_back(c);
    t.columns.push_back("speedup_mean_vs_" + base);
    t.columns.push_back("speedup_p999_vs_" + base);
  }
  std::map<std::pair<std::uint64_t, double>, sdr::CompletionStats> baseline;
  for_cells(cfg, [&](const std::string& name, std::uint64_t bytes, double p) {
    const auto sc = cfg.scenario_for(p);
    const auto M = cfg.chunks(bytes);
    const auto scheme = cfg.scheme(name);
    const auto r = sdr::run_write_mc(sc, scheme, M, cfg.trials, cfg.seed, cfg.threads);
    const auto& s = r.stats;
    const double ll = sc.lossless(M);
    auto row = common(cfg, name, bytes, p);
    append(row, fmt(std::uint64_t{cfg.trials}), fmt(cfg.seed), fmt(s.mean), fmt(s.p50), fmt(s.p99), fmt(s.p999),
           fmt(s.min), fmt(s.max), fmt(r.fallbacks), fmt(r.aborts), fmt(ll), fmt(s.mean / ll), fmt(s.p999 / ll));
    if (with_model) {
      const auto a = analytic(sc, scheme, M);
      append(row, fmt(a.value), a.lower_bound ? "lower_bound" : "exact");
      if (name == cfg.schemes.front()) baseline[{bytes, p}] = s;
      const auto& b = baseline.at({bytes, p});
      append(row, fmt(b.mean / s.mean), fmt(b.p999 / s.p999));
    }
    t.rows.push_back(std::move(row));
  });
  return t;
}

}  // namespace

CsvTable run_mc(const ExperimentConfig& cfg) { return mc_table(cfg, false); }
CsvTable run_sweep(const ExperimentConfig& cfg) { return mc_table(cfg, true); }

CsvTable run_allreduce(const ExperimentConfig& cfg) {
  CsvTable t;
  t.columns = cols({"N", "stage_source", "trials", "seed", "mean_s", "p50_s", "p99_s", "p999_s", "max_s",
                    "mean_stage_s", "lower_bound_s", "bound_holds"});
  t.columns.push_back("speedup_mean_vs_" + cfg.schemes.front());
  t.columns.push_back("speedup_p999_vs_" + cfg.schemes.front());
  std::map<std::tuple<std::uint64_t, double, std::uint32_t>, sdr::CompletionStats> baseline;
  for (const auto& name : cfg.schemes)
    for (auto bytes : cfg.message_bytes)
      for (double p : cfg.drop_rates)
        for (auto N : cfg.datacenters) {
          const auto sc = cfg.scenario_for(p);
          const auto scheme = cfg.scheme(name);
          const auto sampler = cfg.event_driven ? sdr::event_stage(sc, scheme) : sdr::stochastic_stage(sc, scheme);
          const auto r = sdr::run_allreduce_mc(N, cfg.chunks(bytes), sampler, cfg.trials, cfg.seed, cfg.threads);
          const auto& s = r.stats;
          if (name == cfg.schemes.front()) baseline[{bytes, p, N}] = s;
          const auto& b = baseline.at({bytes, p, N});
          auto row = common(cfg, name, bytes, p);
          // the recurrence sums stages in a different order than the mean; allow for rounding
          const bool holds = s.mean >= r.lower_bound * (1 - 1e-12);
          append(row, fmt(std::uint64_t{N}), cfg.event_driven ? "event" : "model", fmt(std::uint64_t{cfg.trials}),
                 fmt(cfg.seed), fmt(s.mean), fmt(s.p50), fmt(s.p99), fmt(s.p999), fmt(s.max), fmt(r.mean_stage),
                 fmt(r.lower_bound), holds ? "1" : "0", fmt(b.mean / s.mean), fmt(b.p999 / s.p999));
          t.rows.push_back(std::move(row));
        }
  return t;
}

CsvTable run_validate(const ExperimentConfig& cfg) {
  CsvTable t;
  t.columns = cols({"trials", "seed", "analytical_s", "mc_mean_s", "rel_error", "regime", "pass"});
  std::size_t failed = 0;
  for_cells(cfg, [&](const std::string& name, std::uint64_t bytes, double p) {
    const auto scheme = cfg.scheme(name);
    if (scheme.is_ec()) bad("schemes", "validate compares the SR sampler only");
    const auto sr = cfg.scenario_for(p).sr_params(cfg.chunks(bytes), scheme.sr_variant());
    const auto a = sdr::e_t_sr_analytical(sr);
    const auto r = sdr::run_sr_mc(sr, cfg.trials, cfg.seed, cfg.threads);
    const double err = std::abs(r.stats.mean - a.value) / a.value;
    const bool pass = err < 0.05;
    failed += !pass;
    auto row = common(cfg, name, bytes, p);
    append(row, fmt(std::uint64_t{cfg.trials}), fmt(cfg.seed), fmt(a.value), fmt(r.stats.mean), fmt(err),
           a.lower_bound ? "serialized" : "pipelined", pass ? "1" : "0");
    t.rows.push_back(std::move(row));
  });
  t.notes.push_back("cells_failed=" + std::to_string(failed) + " of " + std::to_string(t.rows.size()));
  t.status = failed ? 1 : 0;
  return t;
}

namespace {

struct ProtocolRun {
  sdr::TransferResult result;
  bool timed_out = false;
  std::optional<bool> bit_exact;
};

// Payload bytes are carried (and checked) up to this size; beyond it the
// transfer is payload-free.
constexpr std::uint64_t kCarryLimit = std::uint64_t{64} << 20;

ProtocolRun protocol_once(const ExperimentConfig& cfg, const std::string& name, std::uint64_t bytes, double p,
                          std::uint64_t link_seed, const sdr::Tracer* tracer, bool log_acks) {
  const auto sc = cfg.scenario_for(p);
  const auto scheme = cfg.scheme(name);
  sdr::EcTransferOptions o;
  o.link.channel = sc.channel;
  if (!sc.p_per_packet) o.link.channel.p_drop = 1.0 - std::pow(1.0 - p, 1.0 / cfg.packets_per_chunk);
  o.link.qp.mtu_bytes = static_cast<std::uint32_t>(cfg.chunk_bytes / cfg.packets_per_chunk);
  o.link.qp.chunk_size_packets = cfg.packets_per_chunk;
  o.link.qp.max_msg_size_bytes = std::max(o.link.qp.max_msg_size_bytes, bytes);
  o.link.seed = link_seed;
  o.sr.variant = scheme.sr_variant();
  o.tracer = tracer;
  o.log_acks = log_acks;
  if (!cfg.force_drop.empty()) {
    auto drops = cfg.force_drop;
    o.data_drop_filter = [drops](const sdr::Packet&, std::uint64_t idx) {
      return std::binary_search(drops.begin(), drops.end(), idx);
    };
  }
  o.ec = scheme.ec;

  ProtocolRun run;
  std::vector<std::byte> msg;
  const bool carry = bytes <= kCarryLimit;
  if (carry) {
    msg.resize(bytes);
    sdr::Rng fill(link_seed ^ 0x5eedULL);
    for (auto& b : msg) b = static_cast<std::byte>(fill() >> 56);
  }
  try {
    if (scheme.is_ec()) {
      run.result = carry ? sdr::run_ec_transfer(o, msg) : sdr::run_ec_transfer(o, bytes);
    } else {
      const sdr::TransferOptions& base = o;
      run.result = carry ? sdr::run_sr_transfer(base, msg) : sdr::run_sr_transfer(base, bytes);
    }
    if (carry) run.bit_exact = run.result.received == msg;
  } catch (const sdr::TimeoutError&) {
    run.timed_out = true;
  }
  return run;
}

}  // namespace

CsvTable run_protocol(const ExperimentConfig& cfg) {
  CsvTable t;
  t.columns = cols({"seed", "trial", "completion_s", "lossless_s", "slowdown", "packets_sent", "packets_dropped",
                    "data_chunks_injected", "parity_chunks_injected", "retransmitted_chunks", "control_messages",
                    "fallback", "timed_out", "bit_exact"});
  for_cells(cfg, [&](const std::string& name, std::uint64_t bytes, double p) {
    for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
      sdr::Rng rng = sdr::Rng::substream(cfg.seed, trial);
      const auto run = protocol_once(cfg, name, bytes, p, rng(), nullptr, false);
      const auto& r = run.result;
      const double ll = cfg.scenario_for(p).lossless(cfg.chunks(bytes));
      const double c = sdr::to_seconds(r.completion);
      auto row = common(cfg, name, bytes, p);
      append(row, fmt(cfg.seed), fmt(std::uint64_t{trial}), run.timed_out ? "" : fmt(c), fmt(ll),
             run.timed_out ? "" : fmt(c / ll), fmt(r.packets_sent), fmt(r.packets_dropped), fmt(r.data_chunks_injected),
             fmt(r.parity_chunks_injected), fmt(r.retransmitted_chunks), fmt(r.control_messages),
             r.fallback ? "1" : "0", run.timed_out ? "1" : "0",
             run.bit_exact ? (*run.bit_exact ? "1" : "0") : "");
      t.rows.push_back(std::move(row));
    }
  });
  return t;
}

CsvTable run_protocol_trace(const ExperimentConfig& cfg) {
  CsvTable t;
  std::ostringstream trace;
  sdr::Tracer tracer(trace, [] { return sdr::SimTime{}; });
  const auto& name = cfg.schemes.front();
  const auto bytes = cfg.message_bytes.front();
  const double p = cfg.drop_rates.front();
  sdr::Rng rng = sdr::Rng::substream(cfg.seed, 0);
  const auto run = protocol_once(cfg, name, bytes, p, rng(), &tracer, true);

  t.columns = {"time_ns", "event", "msg_id", "generation", "packet_offset", "action"};
  std::string line;
  std::istringstream in(trace.str());
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(cell);
    t.rows.push_back(std::move(row));
  }
  const auto& r = run.result;
  t.notes.push_back("scheme=" + name + " message_bytes=" + fmt(bytes) + " chunks=" + fmt(cfg.chunks(bytes)) +
                    " p_drop=" + fmt(p));
  for (const auto& [ack, bits] : r.ack_log) {
    std::string b;
    for (std::size_t i = 0; i < bits.size(); ++i) b += bits.test(i) ? '1' : '0';
    t.notes.push_back("sr_ack cumulative=" + std::to_string(ack.cumulative) + " chunk_bits=" + b);
  }
  t.notes.push_back("completion_s=" + (run.timed_out ? std::string("timeout") : fmt(sdr::to_seconds(r.completion))) +
                    " packets_sent=" + fmt(r.packets_sent) + " packets_dropped=" + fmt(r.packets_dropped) +
                    " retransmitted_chunks=" + fmt(r.retransmitted_chunks) + " fallback=" + (r.fallback ? "1" : "0") +
                    " bit_exact=" + (run.bit_exact ? (*run.bit_exact ? "1" : "0") : "n/a"));
  return t;
}

CsvTable run(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.scenario == "model") return run_model(cfg);
  if (cfg.scenario == "mc") return run_mc(cfg);
  if (cfg.scenario == "sweep") return run_sweep(cfg);
  if (cfg.scenario == "allreduce") return run_allreduce(cfg);
  if (cfg.scenario == "validate") return run_validate(cfg);
  return run_protocol(cfg);
}

}  // namespace sdrcli
