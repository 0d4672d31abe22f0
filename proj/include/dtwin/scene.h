#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtwin/geometry.h"

namespace dtwin {

/// Monotonic time in microseconds.
using Micros = std::int64_t;

enum class Origin { kPhysical, kVirtual };

struct VehicleState {
  std::string vehicle_id;
  Pose2D pose;
  double speed = 0.0;     // m/s, never negative
  double yaw_rate = 0.0;  // rad/s
  double accel = 0.0;     // m/s^2
  Micros timestamp = 0;
  Origin origin = Origin::kVirtual;

  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

/// Normalized actuation. steering +1 is full left.
struct ControlCommand {
  double steering = 0.0;  // [-1, 1]
  double throttle = 0.0;  // [0, 1]
  double brake = 0.0;     // [0, 1]
  Micros timestamp = 0;
  std::int64_t seq = 0;

  friend bool operator==(const ControlCommand&, const ControlCommand&) = default;
};

/// Clamps each channel into range. NaN channels become 0 so a glitching
/// input device cannot take down the loop.
ControlCommand clamp_command(const ControlCommand& raw);

struct VehicleConfig {
  double wheelbase = 3.0;
  double max_steer_angle = 0.55;
  double a_max = 2.4;   // full-throttle accel
  double b_max = 7.6;   // full-brake decel
  double drag_coeff = 0.001;
  double length = 5.2;
  double width = 2.0;

  /// Throws Error on a non-positive dimension or length <= wheelbase.
  void validate() const;

  friend bool operator==(const VehicleConfig&, const VehicleConfig&) = default;
};

/// Oriented length x width rectangle test (separating axis).
bool collision_check(const VehicleState& a, const VehicleConfig& ca,
                     const VehicleState& b, const VehicleConfig& cb);

/// Separation between the two footprints in meters, 0 on overlap.
double footprint_gap(const VehicleState& a, const VehicleConfig& ca,
                     const VehicleState& b, const VehicleConfig& cb);

struct Lane {
  Polyline centerline;
  double width = 3.5;
};

struct RoadNetwork {
  std::vector<Lane> lanes;
  std::vector<Polyline> intersections;  // convex conflict polygons

  void validate() const;
};

RoadNetwork road_network_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RoadNetwork& net);
RoadNetwork load_road_network(const std::filesystem::path& path);

// JSON helpers shared by the wire protocol and scenario files.
nlohmann::json to_json(const Pose2D& pose);
Pose2D pose_from_json(const nlohmann::json& j);
nlohmann::json to_json(const VehicleConfig& cfg);
VehicleConfig vehicle_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Polyline& line);
Polyline polyline_from_json(const nlohmann::json& j);

const char* to_string(Origin origin);
Origin origin_from_string(const std::string& s);

}  // namespace dtwin
