// sdrsim: reliability experiments as CSV.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "CLI11.hpp"
#include "cli.hpp"

using namespace sdrcli;

namespace {

struct Flags {
  std::optional<std::string> config;
  std::optional<double> bandwidth, rtt_ms, alpha, beta, jitter_us;
  std::optional<std::uint64_t> chunk_bytes;
  std::optional<std::uint32_t> packets_per_chunk, k, m;
  std::optional<std::string> drop_unit;
  std::vector<std::string> schemes, sizes, rates, force_drop;
  std::vector<std::uint32_t> datacenters;
  std::optional<std::size_t> trials;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  bool event_driven = false;
  std::optional<std::string> output;
  std::string mode;
};

void add_options(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "JSON config file; flags override its values");
  app->add_option("--bandwidth", f.bandwidth, "link bandwidth in bit/s");
  app->add_option("--rtt-ms", f.rtt_ms, "round-trip time in ms");
  app->add_option("--alpha", f.alpha, "RTO buffering coefficient");
  app->add_option("--beta", f.beta, "fallback-timeout buffering coefficient");
  app->add_option("--jitter-us", f.jitter_us, "per-packet reordering jitter bound (event simulator)");
  app->add_option("--chunk-bytes", f.chunk_bytes, "bitmap chunk size");
  app->add_option("--packets-per-chunk", f.packets_per_chunk, "packets per chunk");
  app->add_option("--drop-unit", f.drop_unit, "packet or chunk");
  app->add_option("--schemes", f.schemes, "sr_rto, sr_nack, ec_mds, ec_xor; the first is the speedup baseline")
      ->delimiter(',');
  app->add_option("-k", f.k, "EC data chunks per submessage");
  app->add_option("-m", f.m, "EC parity chunks per submessage");
  app->add_option("--sizes", f.sizes, "message sizes: 131072, 128MiB, 2^20, 2^17..2^36")->delimiter(',');
  app->add_option("--drop-rates", f.rates, "drop rates: 1e-5, 1e-6..1e-2, 1e-6..1e-2:2")->delimiter(',');
  app->add_option("--datacenters", f.datacenters, "ring sizes for allreduce")->delimiter(',');
  app->add_option("--trials", f.trials, "samples per cell (protocol: runs per cell)");
  app->add_option("--seed", f.seed, "base seed (default: $SDRSIM_SEED or 1)");
  app->add_option("--threads", f.threads, "worker threads; results do not depend on it");
  app->add_option("--force-drop", f.force_drop, "protocol: data packet indices to drop")->delimiter(',');
  app->add_flag("--event-driven", f.event_driven, "allreduce: run every stage through the event simulator");
  app->add_option("-o,--output", f.output, "output file, - for stdout");
}

ExperimentConfig defaults_for(const std::string& sub) {
  ExperimentConfig c;
  c.scenario = sub;
  c.threads = std::max(1U, std::thread::hardware_concurrency());
  if (sub == "model" || sub == "sweep") {
    c.schemes = {"sr_rto", "sr_nack", "ec_mds", "ec_xor"};
    c.message_bytes = parse_sizes({"2^17..2^36"}, "message_bytes");
  } else if (sub == "allreduce") {
    c.schemes = {"sr_rto", "ec_mds"};
    c.drop_rates = parse_rates({"1e-6..1e-2"}, "drop_rates");
    c.datacenters = {2, 4, 8};
  } else if (sub == "validate") {
    c.drop_unit = "chunk";
    c.message_bytes = {c.chunk_bytes, 10 * c.chunk_bytes, 100 * c.chunk_bytes, 1000 * c.chunk_bytes};
    c.drop_rates = {1e-4, 1e-3, 1e-2, 0.1, 0.3};
  } else if (sub == "protocol") {
    c.message_bytes = {4 * c.chunk_bytes};
    c.trials = 1;
  }
  if (const char* env = std::getenv("SDRSIM_SEED")) {
    try {
      c.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("SDRSIM_SEED: not an unsigned integer '") + env + "'");
    }
  }
  return c;
}

ExperimentConfig resolve(const std::string& sub, const Flags& f) {
  ExperimentConfig c = defaults_for(sub);
  if (f.config) {
    std::ifstream in(*f.config);
    if (!in) throw ConfigError("config: cannot open '" + *f.config + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config: " + std::string(e.what()));
    }
    c = ExperimentConfig::from_json(j, c);
    c.scenario = sub;
  }
  if (f.bandwidth) c.bandwidth_bps = *f.bandwidth;
  if (f.rtt_ms) c.rtt_ms = *f.rtt_ms;
  if (f.alpha) c.alpha = *f.alpha;
  if (f.beta) c.beta = *f.beta;
  if (f.jitter_us) c.jitter_us = *f.jitter_us;
  if (f.chunk_bytes) c.chunk_bytes = *f.chunk_bytes;
  if (f.packets_per_chunk) c.packets_per_chunk = *f.packets_per_chunk;
  if (f.drop_unit) c.drop_unit = *f.drop_unit;
  if (!f.schemes.empty()) c.schemes = f.schemes;
  if (f.k) c.k = *f.k;
  if (f.m) c.m = *f.m;
  if (!f.sizes.empty()) c.message_bytes = parse_sizes(f.sizes, "message_bytes");
  if (!f.rates.empty()) c.drop_rates = parse_rates(f.rates, "drop_rates");
  if (!f.datacenters.empty()) c.datacenters = f.datacenters;
  if (f.trials) c.trials = *f.trials;
  if (f.seed) c.seed = *f.seed;
  if (f.threads) c.threads = *f.threads;
  if (f.event_driven) c.event_driven = true;
  if (!f.force_drop.empty()) {
    c.force_drop.clear();
    for (const auto& s : f.force_drop) {
      try {
        c.force_drop.push_back(std::stoull(s));
      } catch (const std::exception&) {
        throw ConfigError("force_drop: bad packet index '" + s + "'");
      }
    }
  }
  if (f.output) c.output = *f.output;
  c.normalize();
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SDR reliability experiments: analytical models, Monte Carlo, event simulation, ring Allreduce"};
  app.set_version_flag("--version", version());
  app.require_subcommand(1);
  Flags f;
  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"model", "closed-form completion times ('model validate' runs the validation table)"},
      {"mc", "Monte Carlo completion-time statistics"},
      {"protocol", "event-driven Writes over the simulated channel ('protocol trace' prints a packet trace)"},
      {"allreduce", "ring Allreduce completion and speedups"},
      {"sweep", "figure-style sweep: Monte Carlo, model and speedups per cell"},
      {"validate", "SR sampler against the closed form; exit status 1 on a miss of 5% or more"},
  };
  for (const auto& s : subs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    add_options(sub, f);
    if (std::string(s.name) == "model")
      sub->add_option("mode", f.mode, "validate")->check(CLI::IsMember({"validate"}));
    if (std::string(s.name) == "protocol")
      sub->add_option("mode", f.mode, "run (default) or trace")->check(CLI::IsMember({"run", "trace"}));
  }
  CLI11_PARSE(app, argc, argv);

  try {
    std::string name = app.get_subcommands().front()->get_name();
    if (name == "model" && f.mode == "validate") name = "validate";
    const ExperimentConfig cfg = resolve(name, f);
    const CsvTable table = (name == "protocol" && f.mode == "trace") ? run_protocol_trace(cfg) : run(cfg);
    if (cfg.output == "-") {
      write_csv(std::cout, cfg, table);
    } else {
      std::ofstream out(cfg.output, std::ios::binary);
      if (!out) throw ConfigError("output: cannot open '" + cfg.output + "'");
      write_csv(out, cfg, table);
    }
    return table.status;
  } catch (const ConfigError& e) {
    std::cerr << "sdrsim: invalid configuration: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "sdrsim: " << e.what() << '\n';
    return 3;
  }
}
