#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "dtwin/scene.h"

namespace dtwin {

/// State estimate of one vehicle as published by its owning endpoint.
struct StateUpdateMsg {
  std::string vehicle_id;
  VehicleState state;
  std::int64_t seq = 0;

  friend bool operator==(const StateUpdateMsg&, const StateUpdateMsg&) = default;
};

struct CommandMsg {
  std::string vehicle_id;
  ControlCommand cmd;

  friend bool operator==(const CommandMsg&, const CommandMsg&) = default;
};

enum class Extrapolation { kHold, kConstantVelocity };

struct SyncPolicy {
  double staleness_threshold_ms = 250.0;
  Extrapolation extrapolation = Extrapolation::kConstantVelocity;
  double max_extrapolation_ms = 200.0;

  void validate() const;
};

enum class IngestResult { kAccepted, kDuplicate, kOutOfOrder };

struct Estimate {
  VehicleState state;
  bool fresh = true;
  double age_ms = 0.0;
};

struct VehicleHealth {
  std::string vehicle_id;
  double age_ms = 0.0;
  bool stale = false;
  std::int64_t rejected_count = 0;
};

/// Latest-state store for the digital thread. Messages are ordered by the
/// sender's seq; ages are measured against local receipt time since the two
/// endpoints' clocks are not assumed to agree.
///
/// Writers are serialized through one lock; readers take shared snapshots.
/// Nothing in here performs I/O.
class TwinRegistry {
 public:
  explicit TwinRegistry(SyncPolicy policy = {});

  IngestResult ingest_state(const StateUpdateMsg& msg, Micros now);

  /// Throws Error("unknown vehicle: <id>") for an id never ingested.
  Estimate latest_estimate(const std::string& vehicle_id, Micros now) const;

  std::vector<VehicleHealth> health(Micros now) const;

  std::optional<StateUpdateMsg> stored(const std::string& vehicle_id) const;

  const SyncPolicy& policy() const { return policy_; }

 private:
  struct Entry {
    StateUpdateMsg latest;
    Micros received_at = 0;
    std::int64_t rejected = 0;
  };

  SyncPolicy policy_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, Entry> entries_;
};

/// Outbound half of a line-framed duplex stream.
class CommandChannel {
 public:
  virtual ~CommandChannel() = default;
  virtual bool is_open() const = 0;
  /// `line` is one complete wire message including the trailing newline.
  virtual void send_line(std::string line) = 0;
};

struct SendReceipt {
  std::int64_t seq = 0;
  std::size_t bytes = 0;
};

/// Serializes and queues a command. Throws Error("thread severed") when the
/// channel is closed.
SendReceipt dispatch_command(const CommandMsg& msg, CommandChannel& channel);

/// In-process channel; the receiving side drains lines in send order.
class LoopbackChannel : public CommandChannel {
 public:
  bool is_open() const override;
  void send_line(std::string line) override;
  void close();
  std::optional<std::string> receive();
  std::size_t pending() const;

 private:
  mutable std::mutex mutex_;
  std::deque<std::string> lines_;
  bool open_ = true;
};

}  // namespace dtwin
