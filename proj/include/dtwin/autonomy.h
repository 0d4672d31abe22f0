#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dtwin/scene.h"
#include "dtwin/v2x.h"

namespace dtwin {

/// Range-and-bearing cone evaluated on ground-truth poses.
struct SensorFrustum {
  double range = 40.0;
  double half_angle = 1.0471975511965976;  // 60 deg

  void validate() const;
};

enum class DetectionSource { kPerception, kV2v };

struct DetectionEvent {
  Micros time = 0;
  std::string target_id;
  DetectionSource via = DetectionSource::kPerception;
  VehicleState target;
};

struct ControllerParams {
  double v_cruise = 10.0;          // m/s
  double speed_gain = 0.5;         // throttle per m/s of speed error
  double comfort_decel = 1.3;      // m/s^2
  double comfort_trigger = 0.9;    // fraction of comfort_decel that starts a CAV stop
  double panic_brake = 1.0;
  double conflict_margin = 3.0;    // m kept short of the conflict point
  double corridor_half_width = 2.5;  // lateral half-width of the ego corridor
  double ttc_threshold = 2.0;      // s, reactive (AV) threat horizon
  double awareness_horizon = 10.0; // s, CAV threat horizon
  double lookahead_min = 5.0;      // pure-pursuit lookahead floor, m
  double stop_snap_speed = 0.01;   // m/s; a planned stop finishes below this
  bool braking_enabled = true;

  /// `b_max` of the governed vehicle bounds comfort_decel.
  void validate(double b_max) const;
};

ControllerParams controller_params_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ControllerParams& p);

/// One event per target whose center lies within range and whose absolute
/// bearing from the ego heading is at most half_angle (both closed).
std::vector<DetectionEvent> perceive(const VehicleState& ego,
                                     std::span<const VehicleState> others,
                                     const SensorFrustum& frustum, Micros now);

/// Keeps the highest-seq BSM per sender and exposes them as detections.
class V2vTracker {
 public:
  void ingest(const BasicSafetyMsg& msg);
  std::vector<DetectionEvent> tracks(Micros now) const;
  std::optional<Micros> first_contact() const { return first_contact_; }

 private:
  std::map<std::string, BasicSafetyMsg> latest_;
  std::optional<Micros> first_contact_;
};

/// What a controller knows about its own vehicle for one tick.
struct EgoContext {
  const VehicleState& state;
  const VehicleConfig& config;
  std::span<const Vec2> path;
  double s = 0.0;                // ego arc length along path
  double conflict_point_s = 0.0; // arc length where the ego would enter conflict
};

enum class Projection { kConstantVelocity, kConstantAcceleration };

/// Earliest time within `horizon` at which the target's projection enters
/// the ego corridor ahead of the ego, or nullopt. kConstantAcceleration uses
/// the target's reported accel when positive (never projects a reversal).
std::optional<double> time_to_corridor(
    const EgoContext& ego, const VehicleState& target,
    const ControllerParams& params, double horizon,
    Projection projection = Projection::kConstantVelocity);

/// Pure-pursuit steering onto `path`, normalized to [-1, 1].
double pure_pursuit_steering(const VehicleState& state,
                             const VehicleConfig& config,
                             std::span<const Vec2> path, double lookahead_min);

/// Proportional speed hold with drag feed-forward, steering on path.
ControlCommand cruise_command(const EgoContext& ego,
                              const ControllerParams& params);

/// Deceleration that stops the ego `margin` short of the conflict point:
/// v^2 / (2 (conflict_s - s - margin)). Infinity when no room is left.
double required_decel(double speed, double s, double conflict_s, double margin);

/// Reactive stack: cruises until a perceived target is predicted to cross
/// the corridor within ttc_threshold, then latches panic braking.
class AvController {
 public:
  explicit AvController(ControllerParams params);

  /// Throws Error when handed a V2V detection.
  ControlCommand update(const EgoContext& ego,
                        std::span<const DetectionEvent> detections, Micros now);

  std::optional<Micros> threat_time() const { return threat_time_; }

 private:
  ControllerParams params_;
  std::optional<Micros> threat_time_;
};

/// Connected stack: same cruise law, but a conflicting peer known via V2V or
/// perception triggers a constant-decel stop planned to end conflict_margin
/// short of the conflict point, recomputed every tick. Broadcast accel lets
/// it flag a peer that is only starting to launch.
class CavController {
 public:
  explicit CavController(ControllerParams params);

  ControlCommand update(const EgoContext& ego,
                        std::span<const DetectionEvent> detections, Micros now);

  std::optional<Micros> threat_time() const { return threat_time_; }
  /// Decel the last update planned for, 0 while cruising.
  double planned_decel() const { return planned_decel_; }

 private:
  ControllerParams params_;
  std::optional<Micros> threat_time_;
  bool stopping_ = false;
  double planned_decel_ = 0.0;
};

struct PeerParams {
  double speed = 10.0;       // scripted crossing speed, m/s
  double speed_gain = 0.5;
  double lookahead_min = 5.0;
};

PeerParams peer_params_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PeerParams& p);

/// Scripted cut-across peer. Holds (full brake) until the ego progress
/// reaches trigger_s, then drives peer_path at the scripted speed without
/// ever yielding.
ControlCommand peer_script(Micros t, double ego_progress_s, double trigger_s,
                           const VehicleState& peer,
                           const VehicleConfig& peer_config,
                           std::span<const Vec2> peer_path,
                           const PeerParams& params);

}  // namespace dtwin
