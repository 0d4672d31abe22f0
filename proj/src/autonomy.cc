#include "dtwin/autonomy.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dtwin/error.h"

namespace dtwin {

void SensorFrustum::validate() const {
  if (!(range > 0.0)) { throw Error("frustum: range must be > 0"); }
  if (!(half_angle > 0.0 && half_angle <= std::numbers::pi)) {
    throw Error("frustum: half_angle must be in (0, pi]");
  }
}

void ControllerParams::validate(double b_max) const {
  if (!(comfort_decel > 0.0)) { throw Error("controller: comfort_decel > 0"); }
  if (comfort_decel > b_max) {
    throw Error("controller: comfort_decel exceeds b_max");
  }
  if (!(panic_brake >= 0.0 && panic_brake <= 1.0)) {
    throw Error("controller: panic_brake in [0, 1]");
  }
  if (!(conflict_margin >= 0.0)) { throw Error("controller: conflict_margin"); }
  if (!(ttc_threshold > 0.0) || !(awareness_horizon > 0.0)) {
    throw Error("controller: horizons must be > 0");
  }
  if (!(corridor_half_width > 0.0)) {
    throw Error("controller: corridor_half_width > 0");
  }
}

ControllerParams controller_params_from_json(const nlohmann::json& j) {
  ControllerParams p;
  p.v_cruise = j.value("v_cruise", p.v_cruise);
  p.speed_gain = j.value("speed_gain", p.speed_gain);
  p.comfort_decel = j.value("comfort_decel", p.comfort_decel);
  p.comfort_trigger = j.value("comfort_trigger", p.comfort_trigger);
  p.panic_brake = j.value("panic_brake", p.panic_brake);
  p.conflict_margin = j.value("conflict_margin", p.conflict_margin);
  p.corridor_half_width = j.value("corridor_half_width", p.corridor_half_width);
  p.ttc_threshold = j.value("ttc_threshold", p.ttc_threshold);
  p.awareness_horizon = j.value("awareness_horizon", p.awareness_horizon);
  p.lookahead_min = j.value("lookahead_min", p.lookahead_min);
  p.stop_snap_speed = j.value("stop_snap_speed", p.stop_snap_speed);
  p.braking_enabled = j.value("braking_enabled", p.braking_enabled);
  return p;
}

nlohmann::json to_json(const ControllerParams& p) {
  return {{"v_cruise", p.v_cruise},
          {"speed_gain", p.speed_gain},
          {"comfort_decel", p.comfort_decel},
          {"comfort_trigger", p.comfort_trigger},
          {"panic_brake", p.panic_brake},
          {"conflict_margin", p.conflict_margin},
          {"corridor_half_width", p.corridor_half_width},
          {"ttc_threshold", p.ttc_threshold},
          {"awareness_horizon", p.awareness_horizon},
          {"lookahead_min", p.lookahead_min},
          {"stop_snap_speed", p.stop_snap_speed},
          {"braking_enabled", p.braking_enabled}};
}

std::vector<DetectionEvent> perceive(const VehicleState& ego,
                                     std::span<const VehicleState> others,
                                     const SensorFrustum& frustum, Micros now) {
  std::vector<DetectionEvent> out;
  for (const VehicleState& target : others) {
    if (target.vehicle_id == ego.vehicle_id) { continue; }
    const Vec2 rel = target.pose.position() - ego.pose.position();
    if (norm(rel) > frustum.range) { continue; }
    const double bearing =
        std::abs(normalize_angle(std::atan2(rel.y, rel.x) - ego.pose.heading()));
    if (bearing > frustum.half_angle) { continue; }
    out.push_back({now, target.vehicle_id, DetectionSource::kPerception, target});
  }
  return out;
}

void V2vTracker::ingest(const BasicSafetyMsg& msg) {
  if (!first_contact_) { first_contact_ = msg.timestamp; }
  auto it = latest_.find(msg.sender_id);
  if (it == latest_.end() || msg.seq > it->second.seq) {
    latest_[msg.sender_id] = msg;
  }
}

std::vector<DetectionEvent> V2vTracker::tracks(Micros now) const {
  std::vector<DetectionEvent> out;
  for (const auto& [id, m] : latest_) {
    VehicleState s;
    s.vehicle_id = id;
    s.pose = m.pose;
    s.speed = m.speed;
    s.accel = m.accel;
    s.timestamp = m.timestamp;
    out.push_back({now, id, DetectionSource::kV2v, s});
  }
  return out;
}

std::optional<double> time_to_corridor(const EgoContext& ego,
                                       const VehicleState& target,
                                       const ControllerParams& params,
                                       double horizon, Projection projection) {
  constexpr double kSampleDt = 0.02;
  const double behind_limit = ego.s - 0.5 * ego.config.length;
  const double a = projection == Projection::kConstantAcceleration
                       ? std::max(0.0, target.accel)
                       : 0.0;
  const int n = static_cast<int>(std::ceil(horizon / kSampleDt));
  for (int i = 0; i <= n; ++i) {
    const double t = std::min(horizon, i * kSampleDt);
    const double travel = target.speed * t + 0.5 * a * t * t;
    const Vec2 p = target.pose.position() + target.pose.forward() * travel;
    if (std::abs(lateral_offset(ego.path, p)) > params.corridor_half_width) {
      continue;
    }
    if (arc_length_along(ego.path, p) < behind_limit) { continue; }
    return t;
  }
  return std::nullopt;
}

double pure_pursuit_steering(const VehicleState& state,
                             const VehicleConfig& config,
                             std::span<const Vec2> path, double lookahead_min) {
  const double lookahead = std::max(lookahead_min, 0.8 * state.speed);
  const double s = arc_length_along(path, state.pose.position());
  const Pose2D target = pose_at_arc_length(path, s + lookahead);
  const Vec2 rel = target.position() - state.pose.position();
  const double dist = norm(rel);
  if (dist < 1e-6) { return 0.0; }
  const double alpha =
      normalize_angle(std::atan2(rel.y, rel.x) - state.pose.heading());
  const double delta =
      std::atan2(2.0 * config.wheelbase * std::sin(alpha), dist);
  return std::clamp(delta / config.max_steer_angle, -1.0, 1.0);
}

ControlCommand cruise_command(const EgoContext& ego,
                              const ControllerParams& params) {
  const double v = ego.state.speed;
  const double feed_forward =
      ego.config.drag_coeff * v * v / ego.config.a_max;
  ControlCommand cmd;
  cmd.throttle = params.speed_gain * (params.v_cruise - v) + feed_forward;
  cmd.steering = pure_pursuit_steering(ego.state, ego.config, ego.path,
                                       params.lookahead_min);
  return clamp_command(cmd);
}

double required_decel(double speed, double s, double conflict_s,
                      double margin) {
  const double room = conflict_s - s - margin;
  if (room <= 0.0) { return std::numeric_limits<double>::infinity(); }
  return speed * speed / (2.0 * room);
}

AvController::AvController(ControllerParams params) : params_(params) {}

ControlCommand AvController::update(const EgoContext& ego,
                                    std::span<const DetectionEvent> detections,
                                    Micros now) {
  for (const auto& d : detections) {
    if (d.via != DetectionSource::kPerception) {
      throw Error("av controller: perception detections only");
    }
  }
  ControlCommand cmd = cruise_command(ego, params_);
  if (!params_.braking_enabled) { return cmd; }
  if (!threat_time_) {
    for (const auto& d : detections) {
      if (time_to_corridor(ego, d.target, params_, params_.ttc_threshold)) {
        threat_time_ = now;
        break;
      }
    }
  }
  if (threat_time_) {
    cmd.throttle = 0.0;
    cmd.brake = params_.panic_brake;
  }
  return clamp_command(cmd);
}

CavController::CavController(ControllerParams params) : params_(params) {}

ControlCommand CavController::update(const EgoContext& ego,
                                     std::span<const DetectionEvent> detections,
                                     Micros now) {
  ControlCommand cmd = cruise_command(ego, params_);
  planned_decel_ = 0.0;
  if (!params_.braking_enabled) { return cmd; }
  if (!threat_time_) {
    for (const auto& d : detections) {
      const bool moving = d.target.speed > 0.0 || d.target.accel > 0.0;
      if (moving &&
          time_to_corridor(ego, d.target, params_, params_.awareness_horizon,
                           Projection::kConstantAcceleration)) {
        threat_time_ = now;
        break;
      }
    }
  }
  if (!threat_time_) { return cmd; }

  const double v = ego.state.speed;
  if (ego.conflict_point_s <= ego.s) {
    // Already inside the conflict region: nothing left to plan with.
    cmd.throttle = 0.0;
    cmd.brake = params_.panic_brake;
    planned_decel_ = params_.panic_brake * ego.config.b_max;
    return clamp_command(cmd);
  }
  const double d =
      required_decel(v, ego.s, ego.conflict_point_s, params_.conflict_margin);
  if (!stopping_ && d < params_.comfort_trigger * params_.comfort_decel) {
    return cmd;
  }
  stopping_ = true;
  planned_decel_ = std::min(d, ego.config.b_max);
  if (v <= params_.stop_snap_speed) {
    cmd.throttle = 0.0;
    cmd.brake = 1.0;
    return clamp_command(cmd);
  }
  // Brake channel delivers the planned net decel after drag.
  const double drag = ego.config.drag_coeff * v * v;
  cmd.throttle = 0.0;
  cmd.brake = std::isfinite(d)
                  ? std::max(0.0, d - drag) / ego.config.b_max
                  : 1.0;
  return clamp_command(cmd);
}

PeerParams peer_params_from_json(const nlohmann::json& j) {
  PeerParams p;
  p.speed = j.value("speed", p.speed);
  p.speed_gain = j.value("speed_gain", p.speed_gain);
  p.lookahead_min = j.value("lookahead_min", p.lookahead_min);
  return p;
}

nlohmann::json to_json(const PeerParams& p) {
  return {{"speed", p.speed},
          {"speed_gain", p.speed_gain},
          {"lookahead_min", p.lookahead_min}};
}

ControlCommand peer_script(Micros t, double ego_progress_s, double trigger_s,
                           const VehicleState& peer,
                           const VehicleConfig& peer_config,
                           std::span<const Vec2> peer_path,
                           const PeerParams& params) {
  ControlCommand cmd;
  cmd.timestamp = t;
  if (ego_progress_s < trigger_s) {
    cmd.brake = 1.0;
    return cmd;
  }
  const double v = peer.speed;
  cmd.throttle = params.speed_gain * (params.speed - v) +
                 peer_config.drag_coeff * v * v / peer_config.a_max;
  cmd.steering =
      pure_pursuit_steering(peer, peer_config, peer_path, params.lookahead_min);
  return clamp_command(cmd);
}

}  // namespace dtwin
