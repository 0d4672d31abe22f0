#include "dtwin/dynamics.h"

#include <algorithm>
#include <cmath>

#include "dtwin/error.h"

namespace dtwin {

void IntegratorSettings::validate() const {
  if (!(dt > 0.0 && dt <= 0.05)) {
    throw Error("integrator: dt must be in (0, 0.05]");
  }
}

Micros IntegratorSettings::dt_us() const {
  return static_cast<Micros>(std::llround(dt * 1e6));
}

VehicleState step(const VehicleState& state, const ControlCommand& cmd,
                  const VehicleConfig& cfg, const IntegratorSettings& s) {
  const bool finite = std::isfinite(state.pose.x()) &&
                      std::isfinite(state.pose.y()) &&
                      std::isfinite(state.pose.heading()) &&
                      std::isfinite(state.speed) &&
                      std::isfinite(state.yaw_rate) &&
                      std::isfinite(state.accel);
  if (!finite) { throw Error("non-finite state"); }

  const double v = state.speed;
  const double a = cfg.a_max * cmd.throttle - cfg.b_max * cmd.brake -
                   cfg.drag_coeff * v * v;
  const double v_next = std::max(0.0, v + a * s.dt);
  const double delta = cmd.steering * cfg.max_steer_angle;
  const double yaw_rate = v_next * std::tan(delta) / cfg.wheelbase;

  VehicleState out = state;
  out.speed = v_next;
  out.yaw_rate = yaw_rate;
  out.accel = (v + a * s.dt < 0.0) ? (v_next - v) / s.dt : a;
  out.pose.set_heading(state.pose.heading() + yaw_rate * s.dt);
  // Position uses the step-average speed; a stop inside the step covers
  // v^2 / (2|a|).
  const double travelled = (v + a * s.dt < 0.0) ? v * v / (-2.0 * a)
                                                 : 0.5 * (v + v_next) * s.dt;
  const Vec2 advance = out.pose.forward() * travelled;
  out.pose.set_position(state.pose.position() + advance);
  out.timestamp = state.timestamp + s.dt_us();
  return out;
}

double stopping_distance(double speed, double decel) {
  if (!(decel > 0.0)) { throw Error("stopping distance: decel must be > 0"); }
  return speed * speed / (2.0 * decel);
}

}  // namespace dtwin
