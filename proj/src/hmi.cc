#include "dtwin/hmi.h"

#include <algorithm>
#include <cmath>

#include "dtwin/error.h"

namespace dtwin {

namespace {

using nlohmann::json;

double clamp_unit(double v) {
  if (!std::isfinite(v)) { return 0.0; }
  return std::clamp(v, -1.0, 1.0);
}

double toward_zero(double v, double step) {
  if (v > 0.0) { return std::max(0.0, v - step); }
  return std::min(0.0, v + step);
}

double deadzone_rescale(double x, double dz) {
  const double mag = std::abs(x);
  if (mag <= dz) { return 0.0; }
  return std::copysign((mag - dz) / (1.0 - dz), x);
}

json state_json(const VehicleState& s) {
  return {{"vehicle_id", s.vehicle_id},
          {"x", s.pose.x()},
          {"y", s.pose.y()},
          {"heading", s.pose.heading()},
          {"speed", s.speed},
          {"yaw_rate", s.yaw_rate},
          {"accel", s.accel},
          {"t_us", s.timestamp},
          {"origin", to_string(s.origin)}};
}

template <typename E, std::size_t N>
E enum_from(const std::string& s, const std::pair<const char*, E> (&table)[N],
            const char* what) {
  for (const auto& [name, value] : table) {
    if (s == name) { return value; }
  }
  throw Error(std::string("unknown ") + what + ": " + s);
}

constexpr std::pair<const char*, Modality> kModalities[] = {
    {"keyboard", Modality::kKeyboard},
    {"mouse", Modality::kMouse},
    {"gamepad", Modality::kGamepad},
    {"wheel", Modality::kWheel}};
constexpr std::pair<const char*, ViewMode> kViews[] = {
    {"single", ViewMode::kSingle},
    {"triple", ViewMode::kTriple},
    {"hmd_static", ViewMode::kHmdStatic},
    {"hmd_dynamic", ViewMode::kHmdDynamic}};
constexpr std::pair<const char*, SessionRole> kRoles[] = {
    {"driver", SessionRole::kDriver}, {"spectator", SessionRole::kSpectator}};

template <typename E, std::size_t N>
const char* enum_name(E v, const std::pair<const char*, E> (&table)[N]) {
  for (const auto& [name, value] : table) {
    if (v == value) { return name; }
  }
  return "?";
}

}  // namespace

const char* to_string(Modality m) { return enum_name(m, kModalities); }
const char* to_string(ViewMode v) { return enum_name(v, kViews); }
const char* to_string(SessionRole r) { return enum_name(r, kRoles); }
Modality modality_from_string(const std::string& s) {
  return enum_from(s, kModalities, "modality");
}
ViewMode view_from_string(const std::string& s) {
  return enum_from(s, kViews, "view");
}
SessionRole role_from_string(const std::string& s) {
  return enum_from(s, kRoles, "role");
}

double InputEvent::axis(const std::string& name) const {
  auto it = axes.find(name);
  return it == axes.end() ? 0.0 : clamp_unit(it->second);
}

bool InputEvent::button(const std::string& name) const {
  auto it = buttons.find(name);
  return it != buttons.end() && it->second;
}

void InputEvent::sanitize() {
  for (auto& [name, v] : axes) { v = clamp_unit(v); }
  if (head) {
    if (!std::isfinite(head->yaw)) { head->yaw = 0.0; }
    if (!std::isfinite(head->pitch)) { head->pitch = 0.0; }
  }
}

void MappingProfile::validate() const {
  if (!(deadzone >= 0.0 && deadzone <= 0.2)) {
    throw Error("mapping profile: deadzone must be in [0, 0.2]");
  }
  if (!(key_ramp_rate > 0.0) || !(key_decay_rate > 0.0)) {
    throw Error("mapping profile: key rates must be > 0");
  }
  if (!(wheel_full_scale_deg > 0.0)) {
    throw Error("mapping profile: wheel_full_scale_deg must be > 0");
  }
  if (!(steer_gain > 0.0) || !(throttle_gain > 0.0)) {
    throw Error("mapping profile: gains must be > 0");
  }
}

MappingProfile default_profile(Modality m) {
  MappingProfile p;
  p.modality = m;
  return p;
}

MappingProfile mapping_profile_from_json(const json& j) {
  MappingProfile p;
  p.modality = modality_from_string(j.at("modality").get<std::string>());
  p.deadzone = j.value("deadzone", p.deadzone);
  p.steer_gain = j.value("steer_gain", p.steer_gain);
  p.throttle_gain = j.value("throttle_gain", p.throttle_gain);
  p.key_ramp_rate = j.value("key_ramp_rate", p.key_ramp_rate);
  p.key_decay_rate = j.value("key_decay_rate", p.key_decay_rate);
  p.wheel_full_scale_deg =
      j.value("wheel_full_scale_deg", p.wheel_full_scale_deg);
  p.validate();
  return p;
}

json to_json(const MappingProfile& p) {
  return {{"modality", to_string(p.modality)},
          {"deadzone", p.deadzone},
          {"steer_gain", p.steer_gain},
          {"throttle_gain", p.throttle_gain},
          {"key_ramp_rate", p.key_ramp_rate},
          {"key_decay_rate", p.key_decay_rate},
          {"wheel_full_scale_deg", p.wheel_full_scale_deg}};
}

ControlCommand map_input(const ControlCommand& prev_cmd, const InputEvent& event,
                         const MappingProfile& profile, double dt) {
  if (event.device != profile.modality) {
    throw Error(std::string("input device mismatch: event ") +
                to_string(event.device) + ", profile " +
                to_string(profile.modality));
  }
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw Error("map_input: dt must be > 0");
  }
  ControlCommand cmd = clamp_command(prev_cmd);
  switch (event.device) {
    case Modality::kKeyboard: {
      const double up = profile.key_ramp_rate * dt;
      const double down = profile.key_decay_rate * dt;
      cmd.throttle = event.button("up") ? cmd.throttle + up
                                        : toward_zero(cmd.throttle, down);
      cmd.brake = event.button("down") ? cmd.brake + up
                                       : toward_zero(cmd.brake, down);
      const bool left = event.button("left");
      const bool right = event.button("right");
      if (left && !right) {
        cmd.steering += up;
      } else if (right && !left) {
        cmd.steering -= up;
      } else {
        cmd.steering = toward_zero(cmd.steering, down);
      }
      break;
    }
    case Modality::kMouse: {
      if (!event.button("pressed")) {
        cmd.steering = cmd.throttle = cmd.brake = 0.0;
        break;
      }
      const double dy = event.axis("drag_y");
      cmd.steering = -event.axis("drag_x") * profile.steer_gain;
      cmd.throttle = std::max(0.0, dy) * profile.throttle_gain;
      cmd.brake = std::max(0.0, -dy);
      break;
    }
    case Modality::kGamepad: {
      cmd.steering =
          -deadzone_rescale(event.axis("stick_x"), profile.deadzone) *
          profile.steer_gain;
      cmd.throttle = std::max(0.0, event.axis("throttle")) * profile.throttle_gain;
      cmd.brake = std::max(0.0, event.axis("brake"));
      break;
    }
    case Modality::kWheel: {
      const double angle_deg = event.axis("wheel") * kWheelLockDeg;
      cmd.steering =
          angle_deg / profile.wheel_full_scale_deg * profile.steer_gain;
      cmd.throttle = std::max(0.0, event.axis("throttle")) * profile.throttle_gain;
      cmd.brake = std::max(0.0, event.axis("brake"));
      break;
    }
  }
  ControlCommand out = clamp_command(cmd);
  out.timestamp = event.t;
  out.seq = prev_cmd.seq;
  return out;
}

ViewTransform apply_view(const Pose2D& ego, ViewMode view, const HeadPose& head) {
  ViewTransform v;
  v.x = ego.x();
  v.y = ego.y();
  v.yaw = ego.heading();
  switch (view) {
    case ViewMode::kSingle: v.hfov = kSingleHfov; break;
    case ViewMode::kTriple: v.hfov = 3.0 * kSingleHfov; break;
    case ViewMode::kHmdStatic: v.hfov = kHmdHfov; break;
    case ViewMode::kHmdDynamic:
      v.hfov = kHmdHfov;
      if (std::isfinite(head.yaw) && std::isfinite(head.pitch)) {
        v.yaw = normalize_angle(ego.heading() + head.yaw);
        v.pitch = head.pitch;
      }
      break;
  }
  return v;
}

bool WarningLatch::raise(const std::string& id, const std::string& text,
                         std::int64_t tick) {
  auto it = entries_.find(id);
  if (it != entries_.end() && !it->second.cleared) { return false; }
  entries_[id] = Entry{{id, text, tick}, false, false};
  return true;
}

void WarningLatch::clear(const std::string& id) {
  auto it = entries_.find(id);
  if (it == entries_.end()) { return; }
  if (it->second.emitted) {
    entries_.erase(it);
  } else {
    it->second.cleared = true;
  }
}

std::vector<Warning> WarningLatch::active() const {
  std::vector<Warning> out;
  for (const auto& [id, e] : entries_) { out.push_back(e.warning); }
  return out;
}

void WarningLatch::mark_emitted() {
  for (auto it = entries_.begin(); it != entries_.end();) {
    if (it->second.cleared) {
      it = entries_.erase(it);
    } else {
      it->second.emitted = true;
      ++it;
    }
  }
}

FrameStreamer::FrameStreamer(Session session)
    : session_(std::move(session)),
      period_us_(std::max<Micros>(
          1, static_cast<Micros>(std::llround(1e6 / session_.stream_rate)))) {}

std::optional<SceneFrame> FrameStreamer::offer(
    std::int64_t tick, Micros now, const std::string& phase,
    const std::vector<VehicleState>& vehicles,
    const std::vector<Warning>& warnings, std::optional<std::int64_t> ack_seq) {
  if (next_due_ && now < *next_due_) { return std::nullopt; }
  if (!next_due_) { next_due_ = now; }
  while (*next_due_ <= now) { *next_due_ += period_us_; }
  SceneFrame f;
  f.tick = tick;
  f.t_us = now;
  f.phase = phase;
  f.vehicles = vehicles;
  f.warnings = warnings;
  if (session_.role == SessionRole::kDriver) { f.ack_seq = ack_seq; }
  return f;
}

SessionRegistry::HelloResult SessionRegistry::hello(const json& msg) {
  Session s;
  try {
    if (!msg.is_object()) { throw Error("not an object"); }
    if (msg.value("type", "") != "hello") { throw Error("type must be hello"); }
    if (!msg.contains("role")) { throw Error("missing role"); }
    s.role = role_from_string(msg.at("role").get<std::string>());
    if (msg.contains("modality")) {
      s.modality = modality_from_string(msg.at("modality").get<std::string>());
    } else if (s.role == SessionRole::kDriver) {
      throw Error("driver hello needs modality");
    }
    if (msg.contains("view")) {
      s.view = view_from_string(msg.at("view").get<std::string>());
    }
    s.stream_rate = msg.value("stream_rate", s.stream_rate);
    if (!(s.stream_rate > 0.0) || !std::isfinite(s.stream_rate)) {
      throw Error("stream_rate must be > 0");
    }
  } catch (const std::exception& e) {
    return Rejection{std::string("malformed hello: ") + e.what()};
  }
  std::unique_lock lock(mutex_);
  if (s.role == SessionRole::kDriver) {
    for (const auto& other : sessions_) {
      if (other.role == SessionRole::kDriver) {
        return Rejection{"driver slot occupied"};
      }
    }
  }
  s.session_id = "s" + std::to_string(next_id_++);
  sessions_.push_back(s);
  return s;
}

void SessionRegistry::release(const std::string& session_id) {
  std::unique_lock lock(mutex_);
  std::erase_if(sessions_, [&](const Session& s) {
    return s.session_id == session_id;
  });
}

std::optional<Session> SessionRegistry::driver() const {
  std::shared_lock lock(mutex_);
  for (const auto& s : sessions_) {
    if (s.role == SessionRole::kDriver) { return s; }
  }
  return std::nullopt;
}

std::vector<Session> SessionRegistry::sessions() const {
  std::shared_lock lock(mutex_);
  return sessions_;
}

json input_event_to_json(const InputEvent& e, std::int64_t seq) {
  json j = {{"type", "input"},
            {"seq", seq},
            {"t_us", e.t},
            {"device", to_string(e.device)},
            {"axes", e.axes},
            {"buttons", e.buttons}};
  if (e.head) { j["head"] = {{"yaw", e.head->yaw}, {"pitch", e.head->pitch}}; }
  return j;
}

InputEvent input_event_from_json(const json& j) {
  try {
    if (j.value("type", "") != "input") { throw Error("type must be input"); }
    InputEvent e;
    e.device = modality_from_string(j.at("device").get<std::string>());
    e.t = j.value("t_us", Micros{0});
    const json axes = j.value("axes", json::object());
    const json buttons = j.value("buttons", json::object());
    for (const auto& [k, v] : axes.items()) {
      e.axes[k] = v.is_number() ? v.get<double>() : 0.0;
    }
    for (const auto& [k, v] : buttons.items()) {
      e.buttons[k] = v.is_boolean() && v.get<bool>();
    }
    if (j.contains("head") && j.at("head").is_object()) {
      HeadPose h;
      h.yaw = j["head"].value("yaw", 0.0);
      h.pitch = j["head"].value("pitch", 0.0);
      h.t = e.t;
      e.head = h;
    }
    e.sanitize();
    return e;
  } catch (const std::exception& ex) {
    throw Error(std::string("malformed input: ") + ex.what());
  }
}

json to_json(const Warning& w) {
  return {{"type", "warning"},
          {"id", w.id},
          {"text", w.text},
          {"since_tick", w.since_tick}};
}

json to_json(const SceneFrame& f) {
  json vehicles = json::array();
  for (const auto& v : f.vehicles) { vehicles.push_back(state_json(v)); }
  json warnings = json::array();
  for (const auto& w : f.warnings) {
    warnings.push_back(
        {{"id", w.id}, {"text", w.text}, {"since_tick", w.since_tick}});
  }
  json j = {{"type", "frame"},       {"tick", f.tick},
            {"t_us", f.t_us},        {"phase", f.phase},
            {"vehicles", vehicles},  {"warnings", warnings}};
  if (f.ack_seq) { j["ack_seq"] = *f.ack_seq; }
  return j;
}

json hello_reply(const SessionRegistry::HelloResult& r) {
  if (const auto* rej = std::get_if<SessionRegistry::Rejection>(&r)) {
    return {{"type", "hello"}, {"accepted", false}, {"reason", rej->reason}};
  }
  const auto& s = std::get<Session>(r);
  return {{"type", "hello"},
          {"accepted", true},
          {"session_id", s.session_id},
          {"role", to_string(s.role)},
          {"modality", to_string(s.modality)},
          {"view", to_string(s.view)},
          {"stream_rate", s.stream_rate}};
}

PqSubmission pq_submission_from_json(const json& j) {
  try {
    if (j.value("type", "") != "pq_submit") {
      throw Error("type must be pq_submit");
    }
    PqSubmission sub;
    auto& r = sub.response;
    r.participant_id = j.at("participant").get<std::string>();
    r.configuration = j.at("configuration").get<std::string>();
    r.set = pq::set_from_string(j.at("set").get<std::string>());
    for (const auto& [k, v] : j.at("ratings").items()) {
      std::size_t used = 0;
      const int item = std::stoi(k, &used);
      if (used != k.size()) { throw Error("bad item id '" + k + "'"); }
      if (!v.is_number_integer()) {
        throw Error("rating for " + k + " is not an integer");
      }
      r.ratings[item] = v.get<int>();
    }
    return sub;
  } catch (const std::exception& ex) {
    throw Error(std::string("malformed pq_submit: ") + ex.what());
  }
}

json pq_submission_to_json(const pq::PqResponse& r) {
  json ratings = json::object();
  for (const auto& [id, v] : r.ratings) { ratings[std::to_string(id)] = v; }
  return {{"type", "pq_submit"},
          {"participant", r.participant_id},
          {"configuration", r.configuration},
          {"set", pq::to_string(r.set)},
          {"ratings", ratings}};
}

json pq_result(const pq::PqResponse& r) {
  const auto errors = pq::validate_response(r.ratings, r.set);
  json out = {{"type", "pq_result"},
              {"participant", r.participant_id},
              {"configuration", r.configuration},
              {"ok", errors.empty()},
              {"errors", errors}};
  if (!errors.empty()) { return out; }
  const pq::FactorScores s = pq::score(r);
  json scores = json::object();
  const char* keys[] = {"f1", "f2", "f3", "f4"};
  for (std::size_t f = 0; f < pq::kFactorCount; ++f) {
    scores[keys[f]] = s.factors[f]
                          ? json{{"score", s.factors[f]->score},
                                 {"max", s.factors[f]->max}}
                          : json(nullptr);
  }
  scores["overall"] = s.overall;
  scores["overall_max"] = s.overall_max;
  scores["f4_reversed"] = s.interface_quality_reversed
                              ? json(*s.interface_quality_reversed)
                              : json(nullptr);
  out["scores"] = scores;
  return out;
}

}  // namespace dtwin
