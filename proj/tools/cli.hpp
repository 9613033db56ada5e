#pragma once

// Experiment runner behind the sdrsim executable: configuration, CSV output
// and one runner per subcommand.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "sdr/collectives.hpp"

namespace sdrcli {

/// Invalid configuration; what() names the offending field.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ExperimentConfig {
  std::string scenario = "mc";  // model, mc, protocol, allreduce, sweep, validate

  double bandwidth_bps = 400e9;
  double rtt_ms = 25.0;
  double alpha = 2.0;
  double beta = 1.0;
  double jitter_us = 0.0;
  std::uint64_t chunk_bytes = 65536;
  std::uint32_t packets_per_chunk = 16;
  /// "packet": drop rates apply per packet and chunk loss is derived;
  /// "chunk": drop rates are chunk loss probabilities.
  std::string drop_unit = "packet";

  std::vector<std::string> schemes{"sr_rto"};
  std::uint32_t k = 32;
  std::uint32_t m = 8;

  std::vector<std::uint64_t> message_bytes{std::uint64_t{128} << 20};
  std::vector<double> drop_rates{1e-5};
  std::vector<std::uint32_t> datacenters{4};

  std::size_t trials = 1000;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  /// allreduce: draw stages from the event simulator instead of the model
  bool event_driven = false;
  /// protocol: data-channel packet indices to drop
  std::vector<std::uint64_t> force_drop;
  std::string output = "-";

  /// Throws ConfigError naming the field.
  void validate() const;
  /// Sorts and deduplicates the grids so output order is canonical.
  void normalize();

  nlohmann::json to_json() const;
  /// Unknown keys and wrong types raise ConfigError. Missing keys keep the
  /// values already in `base`.
  static ExperimentConfig from_json(const nlohmann::json& j, ExperimentConfig base);
  static ExperimentConfig from_json(const nlohmann::json& j);

  /// FNV-1a 64 of the canonical JSON, excluding the output path and thread count.
  std::uint64_t hash() const;

  sdr::Scenario scenario_for(double p) const;
  sdr::Scheme scheme(const std::string& name) const;
  std::uint64_t chunks(std::uint64_t bytes) const { return (bytes + chunk_bytes - 1) / chunk_bytes; }
};

/// Locale-independent, 9 significant digits, shortest form.
std::string fmt(double v);
std::string fmt(std::uint64_t v);

/// "131072", "64KiB", "128MiB", "8GiB", "2^20", and "2^17..2^36" (every power
/// of two in between). Throws ConfigError mentioning `field`.
std::vector<std::uint64_t> parse_sizes(const std::vector<std::string>& items, const std::string& field);
/// Numbers, or "1e-6..1e-2" (decades) and "1e-6..1e-2:2" (steps per decade).
std::vector<double> parse_rates(const std::vector<std::string>& items, const std::string& field);

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  /// Free-form lines written after the metadata, each prefixed with '#'.
  std::vector<std::string> notes;
  /// Non-zero when a check inside the run failed (validate).
  int status = 0;
};

/// '#'-prefixed metadata (tool, version, subcommand, seed, config hash,
/// config), the header and the rows.
void write_csv(std::ostream& out, const ExperimentConfig& cfg, const CsvTable& table);

CsvTable run_model(const ExperimentConfig& cfg);
CsvTable run_mc(const ExperimentConfig& cfg);
CsvTable run_sweep(const ExperimentConfig& cfg);
CsvTable run_allreduce(const ExperimentConfig& cfg);
/// SR sampler against the closed form; status 1 if any cell is off by 5% or more.
CsvTable run_validate(const ExperimentConfig& cfg);
/// Event-driven Writes; one row per (scheme, size, p, seed offset).
CsvTable run_protocol(const ExperimentConfig& cfg);
/// Single event-driven Write with the packet trace and every SR ACK written
/// as notes.
CsvTable run_protocol_trace(const ExperimentConfig& cfg);

CsvTable run(const ExperimentConfig& cfg);

const char* version();

}  // namespace sdrcli
