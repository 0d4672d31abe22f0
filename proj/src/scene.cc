#include "dtwin/scene.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dtwin/error.h"

namespace dtwin {

namespace {

double clamp_channel(double v, double lo, double hi) {
  if (std::isnan(v)) { return 0.0; }
  return std::clamp(v, lo, hi);
}

}  // namespace

ControlCommand clamp_command(const ControlCommand& raw) {
  ControlCommand out = raw;
  out.steering = clamp_channel(raw.steering, -1.0, 1.0);
  out.throttle = clamp_channel(raw.throttle, 0.0, 1.0);
  out.brake = clamp_channel(raw.brake, 0.0, 1.0);
  return out;
}

void VehicleConfig::validate() const {
  const bool positive = wheelbase > 0.0 && max_steer_angle > 0.0 &&
                        a_max > 0.0 && b_max > 0.0 && length > 0.0 &&
                        width > 0.0;
  if (!positive) { throw Error("vehicle config: dimensions must be positive"); }
  if (!(drag_coeff >= 0.0)) { throw Error("vehicle config: negative drag"); }
  if (!(length > wheelbase)) {
    throw Error("vehicle config: length must exceed wheelbase");
  }
}

bool collision_check(const VehicleState& a, const VehicleConfig& ca,
                     const VehicleState& b, const VehicleConfig& cb) {
  const auto ra = footprint_corners(a.pose, ca.length, ca.width);
  const auto rb = footprint_corners(b.pose, cb.length, cb.width);
  return convex_overlap(ra, rb);
}

double footprint_gap(const VehicleState& a, const VehicleConfig& ca,
                     const VehicleState& b, const VehicleConfig& cb) {
  const auto ra = footprint_corners(a.pose, ca.length, ca.width);
  const auto rb = footprint_corners(b.pose, cb.length, cb.width);
  return convex_gap(ra, rb);
}

void RoadNetwork::validate() const {
  for (const auto& lane : lanes) {
    if (lane.centerline.size() < 2) {
      throw Error("road network: lane needs at least 2 points");
    }
    if (!(lane.width > 0.0)) { throw Error("road network: lane width"); }
  }
  for (const auto& poly : intersections) {
    if (poly.size() < 3) {
      throw Error("road network: intersection needs at least 3 points");
    }
    if (!is_convex(poly)) {
      throw Error("road network: intersection polygon is not convex");
    }
  }
}

nlohmann::json to_json(const Polyline& line) {
  auto arr = nlohmann::json::array();
  for (Vec2 p : line) { arr.push_back({p.x, p.y}); }
  return arr;
}

Polyline polyline_from_json(const nlohmann::json& j) {
  Polyline out;
  for (const auto& p : j) {
    out.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  }
  return out;
}

RoadNetwork road_network_from_json(const nlohmann::json& j) {
  RoadNetwork net;
  for (const auto& lane : j.value("lanes", nlohmann::json::array())) {
    net.lanes.push_back({polyline_from_json(lane.at("centerline")),
                         lane.value("width", 3.5)});
  }
  for (const auto& poly :
       j.value("intersections", nlohmann::json::array())) {
    net.intersections.push_back(polyline_from_json(poly));
  }
  net.validate();
  return net;
}

nlohmann::json to_json(const RoadNetwork& net) {
  nlohmann::json j;
  j["lanes"] = nlohmann::json::array();
  for (const auto& lane : net.lanes) {
    j["lanes"].push_back(
        {{"centerline", to_json(lane.centerline)}, {"width", lane.width}});
  }
  j["intersections"] = nlohmann::json::array();
  for (const auto& poly : net.intersections) {
    j["intersections"].push_back(to_json(poly));
  }
  return j;
}

RoadNetwork load_road_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) { throw Error("cannot open road network: " + path.string()); }
  return road_network_from_json(nlohmann::json::parse(in));
}

nlohmann::json to_json(const Pose2D& pose) {
  return {{"x", pose.x()}, {"y", pose.y()}, {"heading", pose.heading()}};
}

Pose2D pose_from_json(const nlohmann::json& j) {
  return {j.at("x").get<double>(), j.at("y").get<double>(),
          j.value("heading", 0.0)};
}

nlohmann::json to_json(const VehicleConfig& cfg) {
  return {{"wheelbase", cfg.wheelbase},   {"max_steer_angle", cfg.max_steer_angle},
          {"a_max", cfg.a_max},           {"b_max", cfg.b_max},
          {"drag_coeff", cfg.drag_coeff}, {"length", cfg.length},
          {"width", cfg.width}};
}

VehicleConfig vehicle_config_from_json(const nlohmann::json& j) {
  VehicleConfig cfg;
  cfg.wheelbase = j.value("wheelbase", cfg.wheelbase);
  cfg.max_steer_angle = j.value("max_steer_angle", cfg.max_steer_angle);
  cfg.a_max = j.value("a_max", cfg.a_max);
  cfg.b_max = j.value("b_max", cfg.b_max);
  cfg.drag_coeff = j.value("drag_coeff", cfg.drag_coeff);
  cfg.length = j.value("length", cfg.length);
  cfg.width = j.value("width", cfg.width);
  cfg.validate();
  return cfg;
}

const char* to_string(Origin origin) {
  return origin == Origin::kPhysical ? "physical" : "virtual";
}

Origin origin_from_string(const std::string& s) {
  if (s == "physical") { return Origin::kPhysical; }
  if (s == "virtual") { return Origin::kVirtual; }
  throw Error("unknown origin: " + s);
}

}  // namespace dtwin
