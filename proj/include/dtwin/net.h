#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "dtwin/scenario.h"
#include "dtwin/wire.h"

namespace dtwin {

struct Endpoint {
  std::string host;
  unsigned short port = 0;
};

/// Parses "host:port" (IPv4 literal or name). Throws Error.
Endpoint parse_endpoint(const std::string& text);

/// Digital side of the thread: TCP client speaking newline-delimited JSON
/// to a physical endpoint. Reads run on an internal I/O thread; drain()
/// hands buffered state updates to the registry with their receipt times.
class TcpPhysicalLink : public PhysicalLink {
 public:
  /// Connects immediately. Throws Error when the endpoint is unreachable.
  explicit TcpPhysicalLink(const std::string& address);
  ~TcpPhysicalLink() override;

  void start(const std::string& vehicle_id, const Pose2D& spawn) override;
  Micros local_now() const override;
  void drain(TwinRegistry& registry) override;
  CommandChannel& channel() override;
  void finish(const std::string& reason) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct EmulatorConfig {
  VehicleConfig vehicle;
  double dt = 0.01;           // dynamics step, s
  double feed_rate_hz = 10.0; // state updates sent per second

  void validate() const;
};

/// Accepts either {"vehicle": {...}, "dt", "feed_rate_hz"} or a bare
/// VehicleConfig object.
EmulatorConfig emulator_config_from_json(const nlohmann::json& j);
EmulatorConfig load_emulator_config(const std::filesystem::path& path);

/// Desk-scale physical twin: one client at a time, the same dynamics as
/// the virtual vehicles at a fixed wall-clock rate, latest-seq command
/// applied, state fed back at feed_rate_hz. A hello with spawn resets the
/// vehicle to rest at that pose; bye or disconnect holds full brake.
class PhysicalEmulator {
 public:
  PhysicalEmulator(EmulatorConfig config, const std::string& listen_address);
  ~PhysicalEmulator();
  PhysicalEmulator(const PhysicalEmulator&) = delete;
  PhysicalEmulator& operator=(const PhysicalEmulator&) = delete;

  unsigned short port() const;
  void stop();

  VehicleState state() const;
  std::int64_t commands_applied() const;
  std::int64_t states_sent() const;

  /// Fault injection: stop feeding state while keeping the socket open.
  void pause_feed(bool paused);
  /// Fault injection: drop the current connection.
  void sever();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dtwin
