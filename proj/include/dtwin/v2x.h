#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "dtwin/scene.h"

namespace dtwin {

struct BasicSafetyMsg {
  std::string sender_id;
  Pose2D pose;
  double speed = 0.0;
  double accel = 0.0;
  Micros timestamp = 0;
  std::int64_t seq = 0;

  friend bool operator==(const BasicSafetyMsg&, const BasicSafetyMsg&) = default;
};

struct ChannelModel {
  double range = 150.0;          // meters
  double latency_base_ms = 20.0;
  double latency_jitter_ms = 10.0;  // uniform half-width
  double loss_prob = 0.0;        // [0, 1)
  std::uint64_t rng_seed = 1;

  void validate() const;
};

ChannelModel channel_model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ChannelModel& c);

struct Receiver {
  std::string id;
  Vec2 position;
};

struct Delivery {
  std::string receiver_id;
  Micros delivery_time = 0;
};

/// Discrete-event broadcast medium owned by the simulation clock.
///
/// Randomness comes from a single mt19937_64 seeded once per bus. For each
/// broadcast the in-range receivers are visited in ascending id order and
/// each consumes exactly two draws (loss, jitter), so the schedule depends
/// only on the message sequence, positions and the channel model.
class V2xBus {
 public:
  explicit V2xBus(ChannelModel model);

  void register_receiver(const std::string& id);

  /// Schedules `msg` for every receiver within range of `sender_pos`,
  /// sent at msg.timestamp. The sender never receives its own message.
  std::vector<Delivery> broadcast(const BasicSafetyMsg& msg, Vec2 sender_pos,
                                  std::vector<Receiver> receivers);

  /// Messages due at or before `now`, in delivery-time order (ties in
  /// scheduling order). Each message is returned once.
  /// Throws Error("unknown receiver: <id>").
  std::vector<BasicSafetyMsg> poll(const std::string& receiver_id, Micros now);

  std::size_t in_flight(const std::string& receiver_id) const;
  const ChannelModel& model() const { return model_; }

 private:
  struct Pending {
    Micros due = 0;
    std::uint64_t order = 0;
    BasicSafetyMsg msg;
  };

  double uniform01();

  ChannelModel model_;
  std::mt19937_64 rng_;
  std::uint64_t next_order_ = 0;
  std::map<std::string, std::vector<Pending>> queues_;
};

}  // namespace dtwin
