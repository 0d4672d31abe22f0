#pragma once

#include "dtwin/scene.h"

namespace dtwin {

enum class IntegratorScheme { kSemiImplicitEuler };

struct IntegratorSettings {
  double dt = 0.01;  // seconds, in (0, 0.05]
  IntegratorScheme scheme = IntegratorScheme::kSemiImplicitEuler;

  void validate() const;
  Micros dt_us() const;
};

/// Advances one fixed step of the kinematic bicycle model with a
/// point-mass longitudinal map:
///   a      = a_max * throttle - b_max * brake - drag * v^2
///   v'     = max(0, v + a dt)
///   omega  = v' tan(steering * max_steer) / wheelbase
///   heading advances with omega, then position with (v + v') / 2 (or
///   v^2 / (2|a|) when the speed clamps to 0 inside the step).
/// `cmd` must already be clamped. Throws Error("non-finite state").
VehicleState step(const VehicleState& state, const ControlCommand& cmd,
                  const VehicleConfig& cfg, const IntegratorSettings& s);

/// Analytic v^2 / (2 decel). Throws Error when decel <= 0.
double stopping_distance(double speed, double decel);

}  // namespace dtwin
