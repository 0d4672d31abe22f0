#include "dtwin/wire.h"

#include "dtwin/error.h"

namespace dtwin {

namespace {

using nlohmann::json;

json header(const char* type, const std::string& id, std::int64_t seq,
            Micros t_us) {
  return {{"type", type}, {"vehicle_id", id}, {"seq", seq}, {"t_us", t_us}};
}

struct Encoder {
  json operator()(const StateUpdateMsg& m) const {
    const VehicleState& s = m.state;
    json j = header("state", m.vehicle_id, m.seq, s.timestamp);
    j["x"] = s.pose.x();
    j["y"] = s.pose.y();
    j["heading"] = s.pose.heading();
    j["speed"] = s.speed;
    j["yaw_rate"] = s.yaw_rate;
    j["accel"] = s.accel;
    j["origin"] = to_string(s.origin);
    return j;
  }
  json operator()(const CommandMsg& m) const {
    json j = header("command", m.vehicle_id, m.cmd.seq, m.cmd.timestamp);
    j["steering"] = m.cmd.steering;
    j["throttle"] = m.cmd.throttle;
    j["brake"] = m.cmd.brake;
    return j;
  }
  json operator()(const HelloMsg& m) const {
    json j = header("hello", m.vehicle_id, m.seq, m.t_us);
    j["role"] = m.role;
    if (m.spawn) { j["spawn"] = to_json(*m.spawn); }
    return j;
  }
  json operator()(const ByeMsg& m) const {
    json j = header("bye", m.vehicle_id, m.seq, m.t_us);
    j["reason"] = m.reason;
    return j;
  }
  json operator()(const BasicSafetyMsg& m) const {
    json j = header("bsm", m.sender_id, m.seq, m.timestamp);
    j["x"] = m.pose.x();
    j["y"] = m.pose.y();
    j["heading"] = m.pose.heading();
    j["speed"] = m.speed;
    j["accel"] = m.accel;
    return j;
  }
};

}  // namespace

json to_wire_json(const WireMessage& msg) { return std::visit(Encoder{}, msg); }

std::string encode_line(const WireMessage& msg) {
  std::string out = to_wire_json(msg).dump();
  out.push_back('\n');
  return out;
}

WireMessage from_wire_json(const json& j) {
  try {
    const std::string type = j.at("type").get<std::string>();
    const std::string id = j.at("vehicle_id").get<std::string>();
    const auto seq = j.at("seq").get<std::int64_t>();
    const auto t_us = j.at("t_us").get<Micros>();
    if (type == "state") {
      StateUpdateMsg m;
      m.vehicle_id = id;
      m.seq = seq;
      m.state.vehicle_id = id;
      m.state.pose = Pose2D(j.at("x").get<double>(), j.at("y").get<double>(),
                            j.at("heading").get<double>());
      m.state.speed = j.at("speed").get<double>();
      m.state.yaw_rate = j.value("yaw_rate", 0.0);
      m.state.accel = j.value("accel", 0.0);
      m.state.timestamp = t_us;
      m.state.origin = origin_from_string(j.value("origin", "physical"));
      if (m.state.speed < 0.0) {
        throw Error("malformed message: negative speed");
      }
      return m;
    }
    if (type == "command") {
      CommandMsg m;
      m.vehicle_id = id;
      m.cmd.seq = seq;
      m.cmd.timestamp = t_us;
      m.cmd.steering = j.at("steering").get<double>();
      m.cmd.throttle = j.at("throttle").get<double>();
      m.cmd.brake = j.at("brake").get<double>();
      return m;
    }
    if (type == "hello") {
      HelloMsg m{id, seq, t_us, j.value("role", ""), std::nullopt};
      if (j.contains("spawn")) { m.spawn = pose_from_json(j.at("spawn")); }
      return m;
    }
    if (type == "bye") { return ByeMsg{id, seq, t_us, j.value("reason", "")}; }
    if (type == "bsm") {
      BasicSafetyMsg m;
      m.sender_id = id;
      m.seq = seq;
      m.timestamp = t_us;
      m.pose = Pose2D(j.at("x").get<double>(), j.at("y").get<double>(),
                      j.at("heading").get<double>());
      m.speed = j.at("speed").get<double>();
      m.accel = j.value("accel", 0.0);
      return m;
    }
    throw Error("malformed message: unknown type '" + type + "'");
  } catch (const json::exception& e) {
    throw Error(std::string("malformed message: ") + e.what());
  }
}

WireMessage decode_line(std::string_view line) {
  while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) {
    line.remove_suffix(1);
  }
  json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error("malformed message: not a JSON object");
  }
  return from_wire_json(j);
}

}  // namespace dtwin
