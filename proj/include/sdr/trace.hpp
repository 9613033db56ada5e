#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string_view>

#include "sdr/simnet.hpp"

namespace sdr {

/// Newline-delimited protocol trace:
///   time,event,msg_id,generation,packet_offset,action
/// `time` is integer nanoseconds. Fields that do not apply are left at -1.
class Tracer {
 public:
  Tracer(std::ostream& out, std::function<SimTime()> clock) : out_(&out), clock_(std::move(clock)) {}

  void record(std::string_view event, std::int64_t msg_id, std::int64_t generation, std::int64_t packet_offset,
              std::string_view action) const {
    const auto t = clock_ ? clock_().time_since_epoch().count() : 0;
    *out_ << t << ',' << event << ',' << msg_id << ',' << generation << ',' << packet_offset << ',' << action
          << '\n';
  }

  /// Same sink, different clock; transfer runners bind their own simulator.
  Tracer with_clock(std::function<SimTime()> clock) const { return Tracer(*out_, std::move(clock)); }

  static constexpr std::string_view header() { return "time,event,msg_id,generation,packet_offset,action"; }

 private:
  std::ostream* out_;
  std::function<SimTime()> clock_;
};

}  // namespace sdr
