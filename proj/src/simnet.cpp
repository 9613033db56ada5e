#include "sdr/simnet.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sdr {

Duration from_seconds(double seconds) {
  return Duration(static_cast<std::int64_t>(std::llround(seconds * 1e9)));
}

double to_seconds(Duration d) { return static_cast<double>(d.count()) * 1e-9; }

double to_seconds(SimTime t) { return to_seconds(t.time_since_epoch()); }

EventId Simulator::schedule_at(SimTime at, Callback cb) {
  if (at < now_) {
    throw std::invalid_argument("schedule_at: timestamp " + std::to_string(at.time_since_epoch().count()) +
                                " ns is before now " + std::to_string(now_.time_since_epoch().count()) + " ns");
  }
  const EventId id = next_id_++;
  heap_.push({at, id});
  callbacks_.emplace(id, std::move(cb));
  return id;
}

EventId Simulator::schedule_after(Duration delay, Callback cb) {
  if (delay < Duration::zero()) throw std::invalid_argument("schedule_after: negative delay");
  return schedule_at(now_ + delay, std::move(cb));
}

bool Simulator::cancel(EventId id) { return callbacks_.erase(id) > 0; }

bool Simulator::step() {
  while (!heap_.empty()) {
    const Entry e = heap_.top();
    heap_.pop();
    auto it = callbacks_.find(e.id);
    if (it == callbacks_.end()) continue;  // cancelled
    Callback cb = std::move(it->second);
    callbacks_.erase(it);
    now_ = e.at;
    ++fired_;
    cb();
    return true;
  }
  return false;
}

void Simulator::run() {
  while (step()) {
  }
}

void Simulator::run_until(SimTime until) {
  while (!heap_.empty()) {
    const Entry e = heap_.top();
    if (e.at > until) break;
    if (!callbacks_.contains(e.id)) {
      heap_.pop();
      continue;
    }
    step();
  }
  if (until > now_) now_ = until;
}

void Simulator::clear() {
  heap_ = {};
  callbacks_.clear();
}

void ChannelParams::validate() const {
  if (!(bandwidth_bits_per_sec > 0.0)) throw std::invalid_argument("bandwidth_bits_per_sec must be > 0");
  if (rtt < Duration::zero()) throw std::invalid_argument("rtt must be >= 0");
  if (!(p_drop >= 0.0 && p_drop <= 1.0)) throw std::invalid_argument("p_drop must lie in [0, 1]");
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
  if (!(beta >= 0.0)) throw std::invalid_argument("beta must be >= 0");
  if (reorder_jitter < Duration::zero()) throw std::invalid_argument("reorder_jitter must be >= 0");
}

Duration ChannelParams::rto() const {
  return rtt + from_seconds(alpha * to_seconds(rtt));
}

Channel::Channel(ChannelParams params, std::uint64_t seed) : params_(params), rng_(seed) {
  params_.validate();
}

std::optional<SimTime> Channel::transmit(const Packet& pkt, SimTime now) {
  const double now_ns = static_cast<double>(now.time_since_epoch().count());
  const double start = std::max(now_ns, busy_until_ns_);
  busy_until_ns_ = start + params_.serialization_seconds(pkt.payload_len) * 1e9;

  const std::uint64_t index = transmitted_++;
  bytes_ += pkt.payload_len;

  // One draw per packet keeps the drop pattern independent of the filter.
  const bool random_drop = rng_.bernoulli(params_.p_drop);
  const bool forced = filter_ && filter_(pkt, index);
  if (random_drop || forced) {
    ++dropped_;
    return std::nullopt;
  }

  double jitter_ns = 0.0;
  if (params_.reorder_jitter > Duration::zero()) {
    jitter_ns = rng_.uniform01() * static_cast<double>(params_.reorder_jitter.count());
  }
  const double arrival_ns =
      busy_until_ns_ + static_cast<double>(params_.one_way().count()) + jitter_ns;
  return SimTime(Duration(static_cast<std::int64_t>(std::llround(arrival_ns))));
}

SimTime Channel::busy_until() const {
  return SimTime(Duration(static_cast<std::int64_t>(std::llround(busy_until_ns_))));
}

}  // namespace sdr
