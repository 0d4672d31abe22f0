#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

#include "dtwin/error.h"
#include "dtwin/scenario.h"

namespace dtwin {

AutonomySource::AutonomySource(Mode mode, ControllerParams params)
    : mode_(mode), av_(params), cav_(params) {
  if (mode == Mode::kHv) { throw Error("autonomy source: hv mode has no stack"); }
}

ControlCommand AutonomySource::command(const TickView& tick) {
  if (mode_ == Mode::kAv) {
    return av_.update(tick.ego, tick.perception, tick.now);
  }
  std::vector<DetectionEvent> all(tick.perception.begin(),
                                  tick.perception.end());
  all.insert(all.end(), tick.v2v.begin(), tick.v2v.end());
  return cav_.update(tick.ego, all, tick.now);
}

std::optional<Micros> AutonomySource::threat_time() const {
  return mode_ == Mode::kAv ? av_.threat_time() : cav_.threat_time();
}

namespace {

constexpr double kPathEndTolerance = 0.5;
constexpr double kReactionBrake = 0.1;

double seconds(Micros us) { return static_cast<double>(us) * 1e-6; }

class Pacer {
 public:
  explicit Pacer(bool enabled) : enabled_(enabled) {}
  void wait_for_tick(std::int64_t tick, double dt) {
    if (!enabled_) { return; }
    std::this_thread::sleep_until(
        start_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                     std::chrono::duration<double>(tick * dt)));
  }

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::vector<std::string> conflict_alerts(const EgoContext& ego,
                                         std::span<const DetectionEvent> known,
                                         const ControllerParams& params) {
  std::vector<std::string> out;
  for (const auto& d : known) {
    const bool moving = d.target.speed > 0.0 || d.target.accel > 0.0;
    if (moving && time_to_corridor(ego, d.target, params,
                                   params.awareness_horizon,
                                   Projection::kConstantAcceleration)) {
      out.push_back(d.target_id);
    }
  }
  return out;
}

}  // namespace

RunResult run(const ScenarioSpec& spec, CommandSource& source,
              const RunEnvironment& env) {
  spec.validate();
  const IntegratorSettings integ = spec.integrator();
  const Micros dt_us = integ.dt_us();
  const double conflict_s = spec.resolved_conflict_point_s();
  const double path_len = path_length(spec.ego_path);
  const bool exchange_bsm = spec.mode != Mode::kAv;
  PhysicalLink* physical = env.physical;

  TwinRegistry registry(spec.sync);
  V2xBus bus(spec.channel);
  bus.register_receiver(spec.ego_id);
  bus.register_receiver(spec.peer_id);
  V2vTracker tracker;

  VehicleState ego;
  ego.vehicle_id = spec.ego_id;
  ego.pose = spec.ego_spawn;
  ego.origin = physical ? Origin::kPhysical : Origin::kVirtual;
  VehicleState peer;
  peer.vehicle_id = spec.peer_id;
  peer.pose = spec.peer_spawn;

  source.on_start();

  const double lost_after_ms = 3.0 * spec.sync.staleness_threshold_ms;
  if (physical) {
    physical->start(spec.ego_id, spec.ego_spawn);
    const Micros deadline =
        physical->local_now() + static_cast<Micros>(lost_after_ms * 1000.0) +
        2'000'000;
    while (true) {
      physical->drain(registry);
      if (registry.stored(spec.ego_id)) { break; }
      if (physical->local_now() > deadline) {
        physical->finish("digital thread lost");
        throw Error("digital thread lost");
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
  }

  RunResult result;
  RunReport& report = result.report;
  report.scenario = spec.name;
  report.geometry = spec.geometry_fingerprint();
  report.mode = spec.mode;
  report.seed = spec.rng_seed;
  report.session_id = source.session_id();
  report.min_gap = std::numeric_limits<double>::infinity();

  Pacer pacer(env.realtime || physical != nullptr);
  std::optional<Micros> trigger_time;
  std::optional<Micros> first_perception;
  std::optional<Micros> first_v2v;
  std::optional<Micros> first_brake;
  ControlCommand last_cmd;
  std::int64_t cmd_seq = 0;
  std::int64_t bsm_seq = 0;
  Micros next_bsm = 0;
  const Micros bsm_period =
      static_cast<Micros>(std::llround(1e6 / spec.bsm_rate_hz));
  const std::int64_t max_ticks =
      static_cast<std::int64_t>(std::ceil(spec.duration_max / spec.dt));

  for (std::int64_t tick = 0;; ++tick) {
    pacer.wait_for_tick(tick, spec.dt);
    const Micros now = tick * dt_us;

    // (1) Ego state: authoritative from the digital thread when attached.
    if (physical) {
      physical->drain(registry);
      const Micros local = physical->local_now();
      const Estimate est = registry.latest_estimate(spec.ego_id, local);
      if (est.age_ms > lost_after_ms) {
        report.termination = Termination::kThreadLost;
        break;
      }
      const Micros keep_ts = ego.timestamp;
      ego = est.state;
      ego.vehicle_id = spec.ego_id;
      ego.origin = Origin::kPhysical;
      ego.timestamp = std::max(keep_ts, now);
    }
    const double ego_s = arc_length_along(spec.ego_path, ego.pose.position());

    // Log the outcome of the previous tick and check termination.
    if (tick > 0) {
      KpiSample sample;
      sample.t = seconds(now);
      sample.s = ego_s;
      sample.speed = ego.speed;
      sample.throttle = last_cmd.throttle;
      sample.brake = last_cmd.brake;
      sample.accel = ego.accel;
      sample.peer_gap =
          footprint_gap(ego, spec.ego_config, peer, spec.peer_config);
      result.samples.push_back(sample);

      if (collision_check(ego, spec.ego_config, peer, spec.peer_config)) {
        report.collision = true;
        report.termination = Termination::kCollision;
        break;
      }
      if (trigger_time && ego.speed == 0.0) {
        report.stop_distance_s = ego_s;
        report.termination = Termination::kStopped;
        break;
      }
      if (ego_s >= path_len - kPathEndTolerance) {
        report.termination = Termination::kPathEnd;
        break;
      }
      if (tick >= max_ticks) {
        report.termination = Termination::kTimeout;
        break;
      }
    }

    // (2) Trigger and scripted peer.
    if (!trigger_time && ego_s >= spec.trigger_s) { trigger_time = now; }
    const double progress = trigger_time ? std::max(ego_s, spec.trigger_s) : ego_s;
    const ControlCommand peer_cmd =
        peer_script(now, progress, spec.trigger_s, peer, spec.peer_config,
                    spec.peer_path, spec.peer);

    // (3) V2X exchange on the simulation clock.
    if (exchange_bsm && now >= next_bsm) {
      next_bsm += bsm_period;
      ++bsm_seq;
      for (const VehicleState* v : {&ego, &peer}) {
        const VehicleState* other = v == &ego ? &peer : &ego;
        BasicSafetyMsg bsm{v->vehicle_id, v->pose, v->speed, v->accel, now,
                           bsm_seq};
        bus.broadcast(bsm, v->pose.position(),
                      {{other->vehicle_id, other->pose.position()}});
      }
    }
    if (exchange_bsm) {
      for (const auto& m : bus.poll(spec.ego_id, now)) {
        if (!first_v2v) { first_v2v = now; }
        tracker.ingest(m);
      }
      bus.poll(spec.peer_id, now);
    }

    const std::vector<VehicleState> others{peer};
    const auto detections = perceive(ego, others, spec.frustum, now);
    if (!detections.empty() && !first_perception) { first_perception = now; }
    const auto v2v = tracker.tracks(now);

    // (4) Ego command.
    const EgoContext ctx{ego, spec.ego_config, spec.ego_path, ego_s, conflict_s};
    const TickView view{now, ctx, peer, detections, v2v,
                        trigger_time.has_value()};
    ControlCommand cmd = clamp_command(source.command(view));
    cmd.timestamp = now;
    cmd.seq = ++cmd_seq;
    result.commands.push_back(cmd);
    if (!first_brake && cmd.brake > kReactionBrake) { first_brake = now; }

    if (env.observer) {
      SceneSnapshot snap;
      snap.tick = tick;
      snap.now = now;
      snap.phase = "running";
      snap.vehicles = {ego, peer};
      snap.ego_command = cmd;
      std::vector<DetectionEvent> known(detections);
      known.insert(known.end(), v2v.begin(), v2v.end());
      snap.conflict_alerts = conflict_alerts(ctx, known, spec.controller);
      std::sort(snap.conflict_alerts.begin(), snap.conflict_alerts.end());
      snap.conflict_alerts.erase(std::unique(snap.conflict_alerts.begin(),
                                             snap.conflict_alerts.end()),
                                 snap.conflict_alerts.end());
      env.observer->on_tick(snap);
    }

    // (5) Apply: over the thread, or locally.
    if (physical) {
      try {
        dispatch_command({spec.ego_id, cmd}, physical->channel());
      } catch (const Error&) {
        report.termination = Termination::kThreadLost;
        break;
      }
    } else {
      ego = step(ego, cmd, spec.ego_config, integ);
    }
    peer = step(peer, peer_cmd, spec.peer_config, integ);
    last_cmd = cmd;
  }

  if (physical) {
    physical->finish(to_string(report.termination));
  }

  report.duration = result.samples.empty() ? 0.0 : result.samples.back().t;
  report.completed = report.termination == Termination::kStopped ||
                     report.termination == Termination::kPathEnd;
  if (result.samples.empty()) {
    report.min_gap = 0.0;
  } else {
    report.peak_accel = result.samples.front().accel;
    report.peak_decel = result.samples.front().accel;
  }
  for (const auto& s : result.samples) {
    report.peak_accel = std::max(report.peak_accel, s.accel);
    report.peak_decel = std::min(report.peak_decel, s.accel);
    report.min_gap = std::min(report.min_gap, s.peer_gap);
  }
  if (first_perception) { report.first_perception_t = seconds(*first_perception); }
  if (first_v2v) { report.first_v2v_t = seconds(*first_v2v); }
  const std::optional<Micros> aware =
      spec.mode == Mode::kHv ? trigger_time : source.threat_time();
  if (aware && first_brake && *first_brake >= *aware) {
    report.reaction_time = seconds(*first_brake - *aware);
  }

  if (env.observer) { env.observer->on_finish(report); }
  return result;
}

}  // namespace dtwin
