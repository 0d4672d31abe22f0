#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "dtwin/hmi.h"
#include "dtwin/scenario.h"

namespace dtwin {

/// Outbound text messages of one connection. Control messages (replies,
/// warnings, results) are never dropped; frames go through a drop-oldest
/// queue so a slow client cannot stall the tick loop.
class Outbox {
 public:
  explicit Outbox(std::size_t frame_capacity = 4);

  void push_control(std::string text);
  void push_frame(std::string text);
  /// Next message to send: control first, then frames.
  std::optional<std::string> pop();
  std::uint64_t dropped_frames() const { return frames_.dropped(); }
  /// Invoked after every push (from the pushing thread).
  void set_notify(std::function<void()> fn);

 private:
  void notify();

  std::mutex mutex_;
  std::deque<std::string> control_;
  DropOldestQueue<std::string> frames_;
  std::function<void()> notify_;
};

struct InputMail {
  std::string session_id;
  std::int64_t seq = 0;
  InputEvent event;
};

/// Transport-independent gateway core. Connection handlers call
/// connect/on_text/disconnect; the tick loop calls drain_inputs and
/// publish*. The two sides share only the input mailbox and the outboxes.
class GatewayHub {
 public:
  using ConnectionId = std::uint64_t;

  explicit GatewayHub(std::size_t frame_capacity = 4);

  ConnectionId connect(std::shared_ptr<Outbox> outbox);
  /// Handles one text message, which may hold several newline-separated
  /// JSON objects. Errors are answered with {"type":"error","reason"}.
  void on_text(ConnectionId id, std::string_view text);
  void disconnect(ConnectionId id);

  std::vector<InputMail> drain_inputs();
  void publish(const SceneSnapshot& snapshot);
  void publish_result(const RunReport& report);

  std::optional<Session> driver() const { return registry_.driver(); }
  std::vector<Session> sessions() const { return registry_.sessions(); }
  std::vector<pq::PqResponse> pq_submissions() const;
  /// Blocks until a driver session exists or the timeout passes.
  bool wait_for_driver(std::chrono::milliseconds timeout) const;
  /// Frame queue depth for outboxes created by transports.
  std::size_t frame_capacity() const { return frame_capacity_; }

 private:
  struct Connection {
    std::shared_ptr<Outbox> outbox;
    std::optional<Session> session;
    std::optional<FrameStreamer> streamer;
  };

  void handle(ConnectionId id, const nlohmann::json& msg);
  void reply(ConnectionId id, const nlohmann::json& msg);

  SessionRegistry registry_;
  std::size_t frame_capacity_;
  mutable std::mutex mutex_;
  mutable std::condition_variable driver_cv_;
  std::map<ConnectionId, Connection> connections_;
  ConnectionId next_id_ = 1;
  std::deque<InputMail> inputs_;
  std::optional<std::int64_t> acked_seq_;
  std::vector<pq::PqResponse> pq_;
  WarningLatch latch_;
};

/// RFC 6455 server on a dedicated I/O thread feeding a GatewayHub.
class GatewayServer {
 public:
  /// Binds immediately; port 0 picks a free port.
  GatewayServer(GatewayHub& hub, const std::string& address,
                unsigned short port);
  ~GatewayServer();
  GatewayServer(const GatewayServer&) = delete;
  GatewayServer& operator=(const GatewayServer&) = delete;

  unsigned short port() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct InputLogEntry {
  Micros now = 0;
  std::optional<InputEvent> event;  // sample applied this tick
  double dt = 0.0;
  ControlCommand cmd;
};

nlohmann::json to_json(const std::vector<InputLogEntry>& log);
std::vector<InputLogEntry> input_log_from_json(const nlohmann::json& j);

/// Re-derives the command log from an input log with map_input.
std::vector<ControlCommand> replay_inputs(const std::vector<InputLogEntry>& log,
                                          const MappingProfile& profile);

/// hv command source: the connected driver's latest input sample is mapped
/// once per tick. Inputs drained at tick k act on tick k.
class DriverSource : public CommandSource {
 public:
  /// `profile` overrides the default profile for the driver's modality.
  DriverSource(GatewayHub& hub, double dt,
               std::optional<MappingProfile> profile = std::nullopt);

  /// Throws Error("hv mode requires a connected driver").
  void on_start() override;
  ControlCommand command(const TickView& tick) override;
  std::string session_id() const override;

  const std::vector<InputLogEntry>& input_log() const { return log_; }
  const MappingProfile& profile() const { return profile_; }

 private:
  GatewayHub& hub_;
  double dt_;
  std::optional<MappingProfile> override_;
  MappingProfile profile_;
  std::optional<Session> driver_;
  std::optional<InputEvent> latest_;
  ControlCommand cmd_;
  std::vector<InputLogEntry> log_;
};

/// Streams every tick snapshot and the final report through the hub.
class GatewayObserver : public RunObserver {
 public:
  explicit GatewayObserver(GatewayHub& hub) : hub_(hub) {}
  void on_tick(const SceneSnapshot& snapshot) override;
  void on_finish(const RunReport& report) override;

 private:
  GatewayHub& hub_;
};

}  // namespace dtwin
