#include <chrono>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "dtwin/error.h"
#include "dtwin/scenario.h"
#include "dtwin/wire.h"

using namespace dtwin;

namespace {

ScenarioSpec default_spec(Mode mode) {
  ScenarioSpec spec = load_scenario(DTWIN_SOURCE_DIR "/scenarios/jump_scare.json");
  spec.mode = mode;
  return spec;
}

RunResult run_mode(Mode mode, bool braking = true) {
  ScenarioSpec spec = default_spec(mode);
  spec.controller.braking_enabled = braking;
  AutonomySource src(mode, spec.controller);
  return run(spec, src);
}

std::string csv_of(const RunResult& r) {
  std::ostringstream out;
  export_run(r.report, r.samples, out, ExportFormat::kCsv);
  return out.str();
}

RunReport report_with_stop(double s, const std::string& geometry = "g") {
  RunReport r;
  r.geometry = geometry;
  r.stop_distance_s = s;
  r.completed = true;
  r.termination = Termination::kStopped;
  return r;
}

// In-process physical twin: integrates its own copy of the ego from the
// commands it receives and feeds state back until `feed_for` elapses.
class FakePhysical : public PhysicalLink {
 public:
  explicit FakePhysical(std::chrono::milliseconds feed_for) : feed_for_(feed_for) {}

  void start(const std::string& id, const Pose2D& spawn) override {
    state_.vehicle_id = id;
    state_.pose = spawn;
    state_.origin = Origin::kPhysical;
    started_ = local_now();
  }
  Micros local_now() const override {
    return std::chrono::duration_cast<std::chrono::microseconds>(
               std::chrono::steady_clock::now() - epoch_)
        .count();
  }
  void drain(TwinRegistry& registry) override {
    while (auto line = channel_.receive()) {
      cmd_ = std::get<CommandMsg>(decode_line(*line)).cmd;
      ++commands;
    }
    const Micros now = local_now();
    while (sim_ + 10'000 <= now - started_) {
      state_ = step(state_, cmd_, cfg_, {0.01});
      sim_ += 10'000;
    }
    if (now - started_ < feed_for_.count() * 1000) {
      registry.ingest_state({state_.vehicle_id, state_, ++seq_}, now);
    }
  }
  CommandChannel& channel() override { return channel_; }
  void finish(const std::string& reason) override { finished = reason; }

  int commands = 0;
  std::string finished;

 private:
  std::chrono::milliseconds feed_for_;
  const std::chrono::steady_clock::time_point epoch_ = std::chrono::steady_clock::now();
  LoopbackChannel channel_;
  VehicleState state_;
  ControlCommand cmd_;
  VehicleConfig cfg_;
  Micros started_ = 0;
  Micros sim_ = 0;
  std::int64_t seq_ = 0;
};

class Recorder : public RunObserver {
 public:
  void on_tick(const SceneSnapshot& s) override { ticks.push_back(s); }
  void on_finish(const RunReport& r) override { final = r; }
  std::vector<SceneSnapshot> ticks;
  std::optional<RunReport> final;
};

}  // namespace

TEST_CASE("default scenario ordering") {
  const RunResult av = run_mode(Mode::kAv);
  const RunResult cav = run_mode(Mode::kCav);
  REQUIRE(av.report.stop_distance_s);
  REQUIRE(cav.report.stop_distance_s);
  CHECK_FALSE(av.report.collision);
  CHECK_FALSE(cav.report.collision);
  CHECK(*cav.report.stop_distance_s < *av.report.stop_distance_s);
  CHECK(std::abs(cav.report.peak_decel) > 0.0);
  CHECK(std::abs(cav.report.peak_decel) <= 0.25 * std::abs(av.report.peak_decel));
  CHECK(av.report.completed);
  CHECK(cav.report.completed);
  CHECK(*cav.report.first_v2v_t < *av.report.first_perception_t);
}

TEST_CASE("braking disabled collides") {
  for (Mode m : {Mode::kAv, Mode::kCav}) {
    const RunResult r = run_mode(m, false);
    CHECK(r.report.collision);
    CHECK(r.report.termination == Termination::kCollision);
    CHECK(r.report.min_gap <= 0.0);
    CHECK_FALSE(r.report.completed);
  }
}

TEST_CASE("runs are deterministic") {
  for (Mode m : {Mode::kAv, Mode::kCav}) {
    const RunResult a = run_mode(m);
    const RunResult b = run_mode(m);
    CHECK(to_json(a.report).dump() == to_json(b.report).dump());
    CHECK(csv_of(a) == csv_of(b));
    CHECK(a.commands == b.commands);
  }
}

TEST_CASE("lossy channel runs are seed-deterministic") {
  ScenarioSpec spec = default_spec(Mode::kCav);
  spec.channel.loss_prob = 0.3;
  spec.channel.latency_jitter_ms = 15.0;
  AutonomySource s1(Mode::kCav, spec.controller), s2(Mode::kCav, spec.controller);
  const RunResult a = run(spec, s1);
  const RunResult b = run(spec, s2);
  CHECK(to_json(a.report).dump() == to_json(b.report).dump());
  CHECK(csv_of(a) == csv_of(b));
}

TEST_CASE("kpi consistency") {
  for (Mode m : {Mode::kAv, Mode::kCav}) {
    const RunResult r = run_mode(m);
    REQUIRE_FALSE(r.samples.empty());
    double min_accel = r.samples.front().accel, max_accel = min_accel;
    double prev_t = -1.0;
    for (const auto& s : r.samples) {
      min_accel = std::min(min_accel, s.accel);
      max_accel = std::max(max_accel, s.accel);
      CHECK(s.t > prev_t);
      prev_t = s.t;
    }
    CHECK(r.report.peak_decel == min_accel);
    CHECK(r.report.peak_accel == max_accel);
    CHECK(*r.report.stop_distance_s == r.samples.back().s);
    CHECK(r.samples.back().speed == 0.0);
    CHECK(r.report.duration == r.samples.back().t);
    CHECK(r.commands.size() == r.samples.size());
    for (std::size_t i = 1; i < r.commands.size(); ++i) {
      CHECK(r.commands[i].seq == r.commands[i - 1].seq + 1);
    }
  }
}

TEST_CASE("observer sees every tick and the final report") {
  ScenarioSpec spec = default_spec(Mode::kCav);
  AutonomySource src(Mode::kCav, spec.controller);
  Recorder rec;
  RunEnvironment env;
  env.observer = &rec;
  const RunResult r = run(spec, src, env);
  CHECK(rec.ticks.size() == r.commands.size());
  REQUIRE(rec.final);
  CHECK(*rec.final == r.report);
  bool alerted = false;
  for (const auto& t : rec.ticks) {
    CHECK(t.vehicles.size() == 2);
    alerted |= !t.conflict_alerts.empty();
  }
  CHECK(alerted);
}

TEST_CASE("hv mode needs a human source") {
  CHECK_THROWS_AS(AutonomySource(Mode::kHv, ControllerParams{}), Error);
}

TEST_CASE("scenario validation") {
  ScenarioSpec spec = default_spec(Mode::kAv);
  CHECK_NOTHROW(spec.validate());
  CHECK(spec.resolved_conflict_point_s() == doctest::Approx(114.0 - 2.6).epsilon(1e-3));
  spec.trigger_s = 200.0;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = default_spec(Mode::kAv);
  spec.dt = 0.1;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = default_spec(Mode::kAv);
  spec.controller.comfort_decel = 9.0;
  CHECK_THROWS_AS(spec.validate(), Error);
  CHECK_THROWS_AS(load_scenario("/nonexistent/x.json"), Error);
  CHECK_THROWS_AS(mode_from_string("bus"), Error);
}

TEST_CASE("scenario json round-trip keeps the geometry") {
  const ScenarioSpec spec = default_spec(Mode::kCav);
  const ScenarioSpec back = scenario_from_json(to_json(spec));
  CHECK(back.geometry_fingerprint() == spec.geometry_fingerprint());
  CHECK(back.mode == Mode::kCav);
  CHECK(back.controller.ttc_threshold == spec.controller.ttc_threshold);
  CHECK(back.peer.speed == spec.peer.speed);
  CHECK(back.channel.rng_seed == spec.channel.rng_seed);
  ScenarioSpec moved = spec;
  moved.peer_spawn = Pose2D(120, -50, spec.peer_spawn.heading());
  CHECK(moved.geometry_fingerprint() != spec.geometry_fingerprint());
}

TEST_CASE("compare examples") {
  const auto t = compare({report_with_stop(110.21), report_with_stop(105.49),
                          report_with_stop(103.86)});
  REQUIRE(t.rows.size() == 3);
  CHECK(*t.rows[0].stop_distance_s == 103.86);
  CHECK(*t.rows[1].stop_distance_s == 105.49);
  CHECK(*t.rows[2].stop_distance_s == 110.21);

  CHECK(compare({report_with_stop(1.0)}).rows.size() == 1);

  RunReport a = report_with_stop(50.0), b = report_with_stop(50.0);
  a.session_id = "first";
  b.session_id = "second";
  const auto tie = compare({a, b});
  CHECK(tie.rows[0].session_id == "first");
  CHECK(tie.rows[1].session_id == "second");

  RunReport crashed = report_with_stop(0.0);
  crashed.stop_distance_s.reset();
  const auto mixed = compare({crashed, report_with_stop(90.0)});
  CHECK(mixed.rows[0].stop_distance_s);

  CHECK_THROWS_WITH_AS(compare({report_with_stop(1.0, "g1"), report_with_stop(2.0, "g2")}),
                       "incomparable runs", Error);

  const std::string text = t.to_text();
  CHECK(text.find("103.86") < text.find("110.21"));
  const std::string csv = t.to_csv();
  CHECK(csv.rfind("mode,stop_distance_s,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("export examples") {
  std::ostringstream empty;
  const RunReport r = report_with_stop(12.5);
  const std::size_t n = export_run(r, {}, empty, ExportFormat::kCsv);
  CHECK(empty.str() == "t,s,speed,throttle,brake,accel,peer_gap\n");
  CHECK(n == empty.str().size());

  std::vector<KpiSample> samples;
  for (int i = 0; i < 1000; ++i) {
    samples.push_back({(i + 1) * 0.01, i * 0.1, 10.0 - i * 0.01, 0.1, 0.0, -1.0 / 3.0,
                       5.0 + i});
  }
  std::ostringstream csv;
  export_run(r, samples, csv, ExportFormat::kCsv);
  const std::string text = csv.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 1001);

  std::istringstream lines(text);
  std::string line;
  std::getline(lines, line);
  for (const auto& s : samples) {
    std::getline(lines, line);
    double v[7];
    REQUIRE(std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf,%lf", &v[0], &v[1],
                        &v[2], &v[3], &v[4], &v[5], &v[6]) == 7);
    const double want[7] = {s.t, s.s, s.speed, s.throttle, s.brake, s.accel, s.peer_gap};
    for (int k = 0; k < 7; ++k) {
      CHECK(v[k] == doctest::Approx(want[k]).epsilon(1e-8));
    }
  }
}

TEST_CASE("json export round-trip") {
  const RunResult run = run_mode(Mode::kCav);
  std::stringstream buf;
  export_run(run.report, run.samples, buf, ExportFormat::kJson);
  const ImportedRun back = import_run_json(buf);
  CHECK(back.report == run.report);
  CHECK(back.samples == run.samples);

  std::stringstream bare(to_json(run.report).dump());
  CHECK(import_run_json(bare).report == run.report);
  std::stringstream junk("{nope");
  CHECK_THROWS_AS(import_run_json(junk), Error);
}

TEST_CASE("export to an unwritable sink") {
  std::ostringstream bad;
  bad.setstate(std::ios::badbit);
  CHECK_THROWS_AS(export_run(RunReport{}, {}, bad, ExportFormat::kCsv), Error);
  CHECK_THROWS_AS(export_run(RunReport{}, {}, std::filesystem::path("/nonexistent/dir/x.csv"),
                             ExportFormat::kCsv),
                  Error);
}

TEST_CASE("attached physical twin is authoritative") {
  ScenarioSpec spec = default_spec(Mode::kAv);
  spec.duration_max = 0.6;
  AutonomySource src(Mode::kAv, spec.controller);
  FakePhysical phys(std::chrono::seconds(10));
  RunEnvironment env;
  env.physical = &phys;
  const RunResult r = run(spec, src, env);
  CHECK(r.report.termination == Termination::kTimeout);
  CHECK(phys.commands > 30);
  CHECK(phys.finished == "timeout");
  CHECK(r.samples.back().s > 0.0);
}

TEST_CASE("severed physical feed ends the run") {
  ScenarioSpec spec = default_spec(Mode::kAv);
  AutonomySource src(Mode::kAv, spec.controller);
  FakePhysical phys(std::chrono::milliseconds(300));
  RunEnvironment env;
  env.physical = &phys;
  const RunResult r = run(spec, src, env);
  CHECK(r.report.termination == Termination::kThreadLost);
  CHECK_FALSE(r.report.completed);
  CHECK(r.report.duration < 2.0);
}

TEST_CASE("physical feed that never starts") {
  ScenarioSpec spec = default_spec(Mode::kAv);
  AutonomySource src(Mode::kAv, spec.controller);
  FakePhysical phys(std::chrono::milliseconds(0));
  RunEnvironment env;
  env.physical = &phys;
  CHECK_THROWS_WITH_AS(run(spec, src, env), "digital thread lost", Error);
}
