#include "dtwin/twin_thread.h"

#include <algorithm>

#include "dtwin/error.h"
#include "dtwin/wire.h"

namespace dtwin {

void SyncPolicy::validate() const {
  if (!(staleness_threshold_ms > 0.0)) {
    throw Error("sync policy: staleness_threshold must be > 0");
  }
  if (!(max_extrapolation_ms >= 0.0)) {
    throw Error("sync policy: max_extrapolation must be >= 0");
  }
}

TwinRegistry::TwinRegistry(SyncPolicy policy) : policy_(policy) {
  policy_.validate();
}

IngestResult TwinRegistry::ingest_state(const StateUpdateMsg& msg, Micros now) {
  std::unique_lock lock(mutex_);
  auto it = entries_.find(msg.vehicle_id);
  if (it == entries_.end()) {
    entries_.emplace(msg.vehicle_id, Entry{msg, now, 0});
    return IngestResult::kAccepted;
  }
  Entry& e = it->second;
  if (msg.seq == e.latest.seq) {
    ++e.rejected;
    return IngestResult::kDuplicate;
  }
  if (msg.seq < e.latest.seq) {
    ++e.rejected;
    return IngestResult::kOutOfOrder;
  }
  e.latest = msg;
  e.received_at = now;
  return IngestResult::kAccepted;
}

Estimate TwinRegistry::latest_estimate(const std::string& vehicle_id,
                                       Micros now) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(vehicle_id);
  if (it == entries_.end()) { throw Error("unknown vehicle: " + vehicle_id); }
  const Entry& e = it->second;

  Estimate est;
  est.state = e.latest.state;
  est.age_ms = static_cast<double>(now - e.received_at) / 1000.0;
  if (est.age_ms > policy_.staleness_threshold_ms) {
    est.fresh = false;
    return est;
  }
  if (policy_.extrapolation == Extrapolation::kConstantVelocity) {
    const double horizon_ms =
        std::clamp(est.age_ms, 0.0, policy_.max_extrapolation_ms);
    const double horizon_s = horizon_ms / 1000.0;
    est.state.pose.set_position(est.state.pose.position() +
                                est.state.pose.forward() *
                                    (est.state.speed * horizon_s));
    est.state.timestamp += static_cast<Micros>(horizon_ms * 1000.0);
  }
  return est;
}

std::vector<VehicleHealth> TwinRegistry::health(Micros now) const {
  std::shared_lock lock(mutex_);
  std::vector<VehicleHealth> out;
  out.reserve(entries_.size());
  for (const auto& [id, e] : entries_) {
    const double age_ms = static_cast<double>(now - e.received_at) / 1000.0;
    out.push_back({id, age_ms, age_ms > policy_.staleness_threshold_ms,
                   e.rejected});
  }
  return out;
}

std::optional<StateUpdateMsg> TwinRegistry::stored(
    const std::string& vehicle_id) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(vehicle_id);
  if (it == entries_.end()) { return std::nullopt; }
  return it->second.latest;
}

SendReceipt dispatch_command(const CommandMsg& msg, CommandChannel& channel) {
  if (!channel.is_open()) { throw Error("thread severed"); }
  std::string line = encode_line(WireMessage{msg});
  const std::size_t bytes = line.size();
  channel.send_line(std::move(line));
  return {msg.cmd.seq, bytes};
}

bool LoopbackChannel::is_open() const {
  std::lock_guard lock(mutex_);
  return open_;
}

void LoopbackChannel::send_line(std::string line) {
  std::lock_guard lock(mutex_);
  if (!open_) { throw Error("thread severed"); }
  lines_.push_back(std::move(line));
}

void LoopbackChannel::close() {
  std::lock_guard lock(mutex_);
  open_ = false;
}

std::optional<std::string> LoopbackChannel::receive() {
  std::lock_guard lock(mutex_);
  if (lines_.empty()) { return std::nullopt; }
  std::string line = std::move(lines_.front());
  lines_.pop_front();
  return line;
}

std::size_t LoopbackChannel::pending() const {
  std::lock_guard lock(mutex_);
  return lines_.size();
}

}  // namespace dtwin
