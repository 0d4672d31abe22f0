#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtwin/pq.h"
#include "dtwin/scene.h"

namespace dtwin {

enum class Modality { kKeyboard, kMouse, kGamepad, kWheel };
enum class ViewMode { kSingle, kTriple, kHmdStatic, kHmdDynamic };
enum class SessionRole { kDriver, kSpectator };

const char* to_string(Modality m);
const char* to_string(ViewMode v);
const char* to_string(SessionRole r);
Modality modality_from_string(const std::string& s);
ViewMode view_from_string(const std::string& s);
SessionRole role_from_string(const std::string& s);

struct Session {
  std::string session_id;
  SessionRole role = SessionRole::kSpectator;
  Modality modality = Modality::kKeyboard;
  ViewMode view = ViewMode::kSingle;
  double stream_rate = 30.0;  // Hz
};

struct HeadPose {
  double yaw = 0.0;    // rad, left positive
  double pitch = 0.0;  // rad, up positive
  Micros t = 0;

  friend bool operator==(const HeadPose&, const HeadPose&) = default;
};

/// Axis and button names per device:
///   keyboard  buttons up, down, left, right
///   mouse     button pressed; axes drag_x (right +), drag_y (up +), each
///             relative to the press anchor, one screen-half = 1
///   gamepad   axes stick_x (right +), throttle, brake (triggers, 0..1)
///   wheel     axes wheel (device angle / 450 deg lock, left +), throttle,
///             brake (pedals, 0..1)
struct InputEvent {
  Modality device = Modality::kKeyboard;
  std::map<std::string, double> axes;
  std::map<std::string, bool> buttons;
  Micros t = 0;
  std::optional<HeadPose> head;

  double axis(const std::string& name) const;
  bool button(const std::string& name) const;
  /// Non-finite axes become 0; all axes clamped to [-1, 1].
  void sanitize();

  friend bool operator==(const InputEvent&, const InputEvent&) = default;
};

inline constexpr double kWheelLockDeg = 450.0;

struct MappingProfile {
  Modality modality = Modality::kKeyboard;
  double deadzone = 0.05;
  double steer_gain = 1.0;
  double throttle_gain = 1.0;
  double key_ramp_rate = 2.0;   // 1/s
  double key_decay_rate = 3.0;  // 1/s
  double wheel_full_scale_deg = 450.0;

  void validate() const;
};

MappingProfile default_profile(Modality m);
MappingProfile mapping_profile_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MappingProfile& p);

/// Maps one device sample onto the previous command. The result keeps
/// prev_cmd.seq and takes event.t as its timestamp. Throws Error on
/// device/profile mismatch or a non-positive dt.
ControlCommand map_input(const ControlCommand& prev_cmd, const InputEvent& event,
                         const MappingProfile& profile, double dt);

struct ViewTransform {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;    // world heading of the camera
  double pitch = 0.0;
  double hfov = 0.0;   // rad

  friend bool operator==(const ViewTransform&, const ViewTransform&) = default;
};

inline constexpr double kSingleHfov = 1.0471975511965976;  // 60 deg
inline constexpr double kHmdHfov = 1.5358897417550099;     // 88 deg

/// Driver-seat camera on `ego`. Only hmd_dynamic follows the head pose;
/// triple widens the single-monitor field of view 3x.
ViewTransform apply_view(const Pose2D& ego, ViewMode view, const HeadPose& head);

/// Fixed-capacity FIFO that discards the oldest entry when full.
template <typename T>
class DropOldestQueue {
 public:
  explicit DropOldestQueue(std::size_t capacity) : capacity_(capacity) {}

  void push(T value) {
    std::lock_guard lock(mutex_);
    if (items_.size() == capacity_) {
      items_.pop_front();
      ++dropped_;
    }
    items_.push_back(std::move(value));
  }
  std::optional<T> pop() {
    std::lock_guard lock(mutex_);
    if (items_.empty()) { return std::nullopt; }
    T v = std::move(items_.front());
    items_.pop_front();
    return v;
  }
  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return items_.size();
  }
  std::uint64_t dropped() const {
    std::lock_guard lock(mutex_);
    return dropped_;
  }

 private:
  mutable std::mutex mutex_;
  std::size_t capacity_;
  std::deque<T> items_;
  std::uint64_t dropped_ = 0;
};

struct Warning {
  std::string id;
  std::string text;
  std::int64_t since_tick = 0;

  friend bool operator==(const Warning&, const Warning&) = default;
};

/// Latched V2H warnings. A raised warning stays active until clear(); one
/// cleared before any frame carried it lingers for exactly one frame.
class WarningLatch {
 public:
  /// True when `id` was not already active.
  bool raise(const std::string& id, const std::string& text, std::int64_t tick);
  void clear(const std::string& id);
  std::vector<Warning> active() const;
  /// Call after a frame has been built from active().
  void mark_emitted();

 private:
  struct Entry {
    Warning warning;
    bool emitted = false;
    bool cleared = false;
  };
  std::map<std::string, Entry> entries_;
};

struct SceneFrame {
  std::int64_t tick = 0;
  Micros t_us = 0;
  std::string phase;
  std::vector<VehicleState> vehicles;
  std::vector<Warning> warnings;
  std::optional<std::int64_t> ack_seq;  // driver sessions only
};

/// Emission schedule for one session on the simulation clock: a frame is
/// due at the first snapshot with now >= next due time; due times advance
/// by 1/stream_rate.
class FrameStreamer {
 public:
  explicit FrameStreamer(Session session);

  /// Frame for this snapshot, or nullopt when not yet due.
  std::optional<SceneFrame> offer(std::int64_t tick, Micros now,
                                  const std::string& phase,
                                  const std::vector<VehicleState>& vehicles,
                                  const std::vector<Warning>& warnings,
                                  std::optional<std::int64_t> ack_seq);
  const Session& session() const { return session_; }

 private:
  Session session_;
  Micros period_us_;
  std::optional<Micros> next_due_;
};

/// Registry of connected sessions. Writer-serialized, snapshot reads.
class SessionRegistry {
 public:
  struct Rejection {
    std::string reason;
  };
  using HelloResult = std::variant<Session, Rejection>;

  /// Validates a hello object and registers the session. Rejections:
  /// "driver slot occupied", "malformed hello: <detail>".
  HelloResult hello(const nlohmann::json& msg);
  void release(const std::string& session_id);
  std::optional<Session> driver() const;
  std::vector<Session> sessions() const;

 private:
  mutable std::shared_mutex mutex_;
  std::vector<Session> sessions_;
  std::uint64_t next_id_ = 1;
};

// Gateway message codecs. Every message is a JSON object with "type".
nlohmann::json input_event_to_json(const InputEvent& e, std::int64_t seq);
/// Throws Error("malformed input: ...").
InputEvent input_event_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SceneFrame& f);
nlohmann::json to_json(const Warning& w);
nlohmann::json hello_reply(const SessionRegistry::HelloResult& r);

struct PqSubmission {
  pq::PqResponse response;
};
/// Throws Error("malformed pq_submit: ...").
PqSubmission pq_submission_from_json(const nlohmann::json& j);
nlohmann::json pq_submission_to_json(const pq::PqResponse& r);
/// Reply of type "pq_result": {ok, errors[], scores{...}}.
nlohmann::json pq_result(const pq::PqResponse& r);

}  // namespace dtwin
