#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dtwin/autonomy.h"
#include "dtwin/dynamics.h"
#include "dtwin/scene.h"
#include "dtwin/twin_thread.h"
#include "dtwin/v2x.h"

namespace dtwin {

enum class Mode { kAv, kCav, kHv };

const char* to_string(Mode mode);
Mode mode_from_string(const std::string& s);

struct ScenarioSpec {
  std::string name = "scenario";
  RoadNetwork map;

  std::string ego_id = "ego";
  Pose2D ego_spawn;
  VehicleConfig ego_config;
  Polyline ego_path;

  std::string peer_id = "peer";
  Pose2D peer_spawn;
  VehicleConfig peer_config;
  Polyline peer_path;
  PeerParams peer;

  double trigger_s = 70.0;
  /// Ego arc length at which its front bumper reaches the first conflict
  /// polygon on its path. Derived from the map when not given.
  std::optional<double> conflict_point_s;

  Mode mode = Mode::kAv;
  ControllerParams controller;
  ChannelModel channel;
  SensorFrustum frustum;
  SyncPolicy sync;
  double bsm_rate_hz = 10.0;

  double duration_max = 60.0;
  double dt = 0.01;
  std::uint64_t rng_seed = 1;

  void validate() const;
  double resolved_conflict_point_s() const;
  /// Stable hash of everything that fixes the run geometry.
  std::string geometry_fingerprint() const;
  IntegratorSettings integrator() const { return {dt}; }
};

/// `base_dir` resolves a map given as a relative file name.
ScenarioSpec scenario_from_json(const nlohmann::json& j,
                                const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const ScenarioSpec& spec);
ScenarioSpec load_scenario(const std::filesystem::path& path);

struct KpiSample {
  double t = 0.0;
  double s = 0.0;
  double speed = 0.0;
  double throttle = 0.0;
  double brake = 0.0;
  double accel = 0.0;
  double peer_gap = 0.0;

  friend bool operator==(const KpiSample&, const KpiSample&) = default;
};

enum class Termination { kStopped, kCollision, kPathEnd, kTimeout, kThreadLost };

const char* to_string(Termination t);

struct RunReport {
  std::string scenario;
  std::string geometry;
  Mode mode = Mode::kAv;
  std::uint64_t seed = 0;
  std::optional<double> stop_distance_s;
  double peak_accel = 0.0;
  double peak_decel = 0.0;
  double min_gap = 0.0;
  bool collision = false;
  std::optional<double> reaction_time;
  bool completed = false;
  Termination termination = Termination::kTimeout;
  double duration = 0.0;
  std::optional<double> first_perception_t;
  std::optional<double> first_v2v_t;
  std::string session_id;

  friend bool operator==(const RunReport&, const RunReport&) = default;
};

nlohmann::json to_json(const RunReport& r);
RunReport run_report_from_json(const nlohmann::json& j);

/// What the command source sees on one tick.
struct TickView {
  Micros now = 0;
  const EgoContext& ego;
  const VehicleState& peer;
  std::span<const DetectionEvent> perception;
  std::span<const DetectionEvent> v2v;
  bool triggered = false;
};

class CommandSource {
 public:
  virtual ~CommandSource() = default;
  /// Ready check made once before the first tick.
  virtual void on_start() {}
  virtual ControlCommand command(const TickView& tick) = 0;
  /// When the source first became aware of a threat, if it tracks that.
  virtual std::optional<Micros> threat_time() const { return std::nullopt; }
  virtual std::string session_id() const { return {}; }
};

/// av / cav command source backed by the autonomy controllers.
class AutonomySource : public CommandSource {
 public:
  AutonomySource(Mode mode, ControllerParams params);
  ControlCommand command(const TickView& tick) override;
  std::optional<Micros> threat_time() const override;

 private:
  Mode mode_;
  AvController av_;
  CavController cav_;
};

/// Attachment to a physical twin endpoint over the digital thread.
class PhysicalLink {
 public:
  virtual ~PhysicalLink() = default;
  /// Sends hello (with spawn) to the physical endpoint.
  virtual void start(const std::string& vehicle_id, const Pose2D& spawn) = 0;
  /// Local monotonic clock used for receipt times.
  virtual Micros local_now() const = 0;
  /// Moves every state update received since the last call into `registry`.
  virtual void drain(TwinRegistry& registry) = 0;
  virtual CommandChannel& channel() = 0;
  virtual void finish(const std::string& reason) = 0;
};

struct SceneSnapshot {
  std::int64_t tick = 0;
  Micros now = 0;
  std::string phase;  // "running" | "finished"
  std::vector<VehicleState> vehicles;
  ControlCommand ego_command;
  /// Peers currently predicted to cross the ego corridor (V2H alerts).
  std::vector<std::string> conflict_alerts;
};

class RunObserver {
 public:
  virtual ~RunObserver() = default;
  virtual void on_tick(const SceneSnapshot& snapshot) = 0;
  virtual void on_finish(const RunReport& report) = 0;
};

struct RunEnvironment {
  PhysicalLink* physical = nullptr;
  RunObserver* observer = nullptr;
  /// Pace ticks against wall time. Forced on when `physical` is set.
  bool realtime = false;
};

struct RunResult {
  RunReport report;
  std::vector<KpiSample> samples;
  std::vector<ControlCommand> commands;  // ego command per tick
};

/// Runs one scenario to termination. Throws Error("digital thread lost")
/// when no physical state ever arrives; a thread lost mid-run ends the run
/// with Termination::kThreadLost instead.
RunResult run(const ScenarioSpec& spec, CommandSource& source,
              const RunEnvironment& env = {});

struct CompareTable {
  std::vector<RunReport> rows;  // ascending stop distance, stable
  std::string to_text() const;
  std::string to_csv() const;
};

/// Throws Error("incomparable runs") when geometries differ.
CompareTable compare(std::vector<RunReport> reports);

enum class ExportFormat { kCsv, kJson };

/// Returns bytes written. Throws Error when the sink fails.
std::size_t export_run(const RunReport& report,
                       std::span<const KpiSample> samples, std::ostream& out,
                       ExportFormat format);
std::size_t export_run(const RunReport& report,
                       std::span<const KpiSample> samples,
                       const std::filesystem::path& path, ExportFormat format);

struct ImportedRun {
  RunReport report;
  std::vector<KpiSample> samples;
};

/// Reads the JSON export (or a bare report object).
ImportedRun import_run_json(std::istream& in);
ImportedRun import_run_json(const std::filesystem::path& path);

}  // namespace dtwin
