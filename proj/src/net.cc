#include "dtwin/net.h"

#include <atomic>
#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include <boost/asio.hpp>

#include "dtwin/dynamics.h"
#include "dtwin/error.h"

namespace dtwin {

namespace {

namespace asio = boost::asio;
using tcp = asio::ip::tcp;

constexpr std::size_t kMaxLine = 1 << 16;

Micros micros_since(std::chrono::steady_clock::time_point epoch) {
  return std::chrono::duration_cast<std::chrono::microseconds>(
             std::chrono::steady_clock::now() - epoch)
      .count();
}

/// One newline-framed full-duplex stream. All socket work happens on the
/// socket's executor; send() and close() may be called from any thread.
class LineConnection : public std::enable_shared_from_this<LineConnection> {
 public:
  using LineFn = std::function<void(const std::string&)>;
  using CloseFn = std::function<void()>;

  explicit LineConnection(tcp::socket socket)
      : socket_(std::move(socket)), buffer_(kMaxLine) {}

  void start(LineFn on_line, CloseFn on_close) {
    on_line_ = std::move(on_line);
    on_close_ = std::move(on_close);
    asio::post(socket_.get_executor(),
               [self = shared_from_this()] { self->read(); });
  }

  bool is_open() const { return open_.load(); }

  void send(std::string line) {
    if (!open_.load()) { return; }
    asio::post(socket_.get_executor(),
               [self = shared_from_this(), line = std::move(line)]() mutable {
                 if (!self->open_.load()) { return; }
                 self->queue_.push_back(std::move(line));
                 if (!self->writing_) { self->write(); }
               });
  }

  /// Closes once every queued line has been written.
  void close_after_flush() {
    asio::post(socket_.get_executor(), [self = shared_from_this()] {
      self->close_when_idle_ = true;
      if (!self->writing_) { self->fail(); }
    });
  }

  void close() {
    asio::post(socket_.get_executor(),
               [self = shared_from_this()] { self->fail(); });
  }

 private:
  void read() {
    asio::async_read_until(
        socket_, buffer_, '\n',
        [self = shared_from_this()](boost::system::error_code ec,
                                    std::size_t n) {
          if (ec) {
            self->fail();
            return;
          }
          std::string line(asio::buffers_begin(self->buffer_.data()),
                           asio::buffers_begin(self->buffer_.data()) + n);
          self->buffer_.consume(n);
          if (self->on_line_) { self->on_line_(line); }
          if (self->open_.load()) { self->read(); }
        });
  }

  void write() {
    if (queue_.empty()) {
      if (close_when_idle_) { fail(); }
      return;
    }
    writing_ = true;
    asio::async_write(socket_, asio::buffer(queue_.front()),
                      [self = shared_from_this()](boost::system::error_code ec,
                                                  std::size_t) {
                        self->writing_ = false;
                        if (ec || !self->open_.load()) {
                          self->fail();
                          return;
                        }
                        self->queue_.pop_front();
                        self->write();
                      });
  }

  void fail() {
    if (!open_.exchange(false)) { return; }
    boost::system::error_code ignored;
    socket_.shutdown(tcp::socket::shutdown_both, ignored);
    socket_.close(ignored);
    if (on_close_) { on_close_(); }
  }

  tcp::socket socket_;
  asio::streambuf buffer_;
  std::deque<std::string> queue_;
  bool writing_ = false;
  bool close_when_idle_ = false;
  std::atomic<bool> open_{true};
  LineFn on_line_;
  CloseFn on_close_;
};

class ConnectionChannel : public CommandChannel {
 public:
  explicit ConnectionChannel(std::shared_ptr<LineConnection> conn)
      : conn_(std::move(conn)) {}
  bool is_open() const override { return conn_->is_open(); }
  void send_line(std::string line) override { conn_->send(std::move(line)); }

 private:
  std::shared_ptr<LineConnection> conn_;
};

}  // namespace

Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw Error("bad address '" + text + "': expected host:port");
  }
  Endpoint ep;
  ep.host = text.substr(0, colon);
  const std::string port = text.substr(colon + 1);
  std::size_t used = 0;
  unsigned long p = 0;
  try {
    p = std::stoul(port, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != port.size() || p > 65535) {
    throw Error("bad address '" + text + "': invalid port");
  }
  ep.port = static_cast<unsigned short>(p);
  return ep;
}

// ---- digital side ----

struct TcpPhysicalLink::Impl {
  asio::io_context ioc;
  asio::executor_work_guard<asio::io_context::executor_type> work{
      ioc.get_executor()};
  std::thread thread;
  std::shared_ptr<LineConnection> conn;
  std::unique_ptr<ConnectionChannel> channel;
  const std::chrono::steady_clock::time_point epoch =
      std::chrono::steady_clock::now();
  std::mutex mutex;
  std::vector<std::pair<StateUpdateMsg, Micros>> inbox;
  std::int64_t seq = 0;
  std::string vehicle_id;

  ~Impl() {
    if (conn) { conn->close(); }
    work.reset();
    if (thread.joinable()) { thread.join(); }
  }
};

TcpPhysicalLink::TcpPhysicalLink(const std::string& address)
    : impl_(std::make_unique<Impl>()) {
  const Endpoint ep = parse_endpoint(address);
  tcp::socket socket(impl_->ioc);
  try {
    tcp::resolver resolver(impl_->ioc);
    asio::connect(socket, resolver.resolve(ep.host, std::to_string(ep.port)));
  } catch (const boost::system::system_error& e) {
    throw Error("cannot reach physical endpoint " + address + ": " + e.what());
  }
  socket.set_option(tcp::no_delay(true));
  impl_->conn = std::make_shared<LineConnection>(std::move(socket));
  impl_->channel = std::make_unique<ConnectionChannel>(impl_->conn);
  Impl* impl = impl_.get();
  impl_->conn->start(
      [impl](const std::string& line) {
        const Micros now = micros_since(impl->epoch);
        try {
          WireMessage msg = decode_line(line);
          if (auto* st = std::get_if<StateUpdateMsg>(&msg)) {
            std::lock_guard lock(impl->mutex);
            impl->inbox.emplace_back(std::move(*st), now);
          }
        } catch (const Error&) {
          // dropped
        }
      },
      [] {});
  impl_->thread = std::thread([impl] { impl->ioc.run(); });
}

TcpPhysicalLink::~TcpPhysicalLink() = default;

void TcpPhysicalLink::start(const std::string& vehicle_id, const Pose2D& spawn) {
  impl_->vehicle_id = vehicle_id;
  HelloMsg hello{vehicle_id, ++impl_->seq, local_now(), "digital", spawn};
  impl_->conn->send(encode_line(hello));
}

Micros TcpPhysicalLink::local_now() const { return micros_since(impl_->epoch); }

void TcpPhysicalLink::drain(TwinRegistry& registry) {
  std::vector<std::pair<StateUpdateMsg, Micros>> batch;
  {
    std::lock_guard lock(impl_->mutex);
    batch.swap(impl_->inbox);
  }
  for (const auto& [msg, received] : batch) {
    registry.ingest_state(msg, received);
  }
}

CommandChannel& TcpPhysicalLink::channel() { return *impl_->channel; }

void TcpPhysicalLink::finish(const std::string& reason) {
  if (!impl_->conn->is_open()) { return; }
  ByeMsg bye{impl_->vehicle_id, ++impl_->seq, local_now(), reason};
  impl_->conn->send(encode_line(bye));
  impl_->conn->close_after_flush();
}

// ---- physical side ----

void EmulatorConfig::validate() const {
  vehicle.validate();
  IntegratorSettings{dt}.validate();
  if (!(feed_rate_hz > 0.0) || feed_rate_hz * dt > 1.0) {
    throw Error("emulator: feed_rate_hz must be in (0, 1/dt]");
  }
}

EmulatorConfig emulator_config_from_json(const nlohmann::json& j) {
  EmulatorConfig c;
  try {
    if (j.contains("vehicle")) {
      c.vehicle = vehicle_config_from_json(j.at("vehicle"));
      c.dt = j.value("dt", c.dt);
      c.feed_rate_hz = j.value("feed_rate_hz", c.feed_rate_hz);
    } else {
      c.vehicle = vehicle_config_from_json(j);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("emulator config: ") + e.what());
  }
  c.validate();
  return c;
}

EmulatorConfig load_emulator_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) { throw Error("cannot open emulator config: " + path.string()); }
  try {
    return emulator_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("emulator config: ") + e.what());
  }
}

struct PhysicalEmulator::Impl {
  explicit Impl(EmulatorConfig c) : config(std::move(c)), acceptor(ioc) {
    state.origin = Origin::kPhysical;
    cmd.brake = 1.0;
  }

  void accept() {
    acceptor.async_accept([this](boost::system::error_code ec,
                                 tcp::socket socket) {
      if (!ec) {
        socket.set_option(tcp::no_delay(true));
        adopt(std::make_shared<LineConnection>(std::move(socket)));
      }
      if (acceptor.is_open()) { accept(); }
    });
  }

  void adopt(std::shared_ptr<LineConnection> fresh) {
    std::shared_ptr<LineConnection> old;
    {
      std::lock_guard lock(mutex);
      old = std::exchange(conn, fresh);
      active = false;
    }
    if (old) { old->close(); }
    std::weak_ptr<LineConnection> weak = fresh;
    fresh->start([this, weak](const std::string& line) { on_line(weak, line); },
                 [this, weak] { on_close(weak); });
  }

  void on_line(const std::weak_ptr<LineConnection>& from,
               const std::string& line) {
    WireMessage msg;
    try {
      msg = decode_line(line);
    } catch (const Error&) {
      return;
    }
    std::lock_guard lock(mutex);
    if (from.lock() != conn) { return; }
    if (const auto* hello = std::get_if<HelloMsg>(&msg)) {
      vehicle_id = hello->vehicle_id;
      if (hello->spawn) {
        state = VehicleState{};
        state.vehicle_id = vehicle_id;
        state.pose = *hello->spawn;
        state.origin = Origin::kPhysical;
        state.timestamp = sim_time;
      }
      cmd = ControlCommand{};
      last_cmd_seq = 0;
      active = true;
      conn->send(encode_line(
          HelloMsg{vehicle_id, ++out_seq, sim_time, "physical", std::nullopt}));
      send_state_locked();
    } else if (const auto* c = std::get_if<CommandMsg>(&msg)) {
      if (active && c->cmd.seq > last_cmd_seq) {
        last_cmd_seq = c->cmd.seq;
        cmd = clamp_command(c->cmd);
        ++applied;
      }
    } else if (std::holds_alternative<ByeMsg>(msg)) {
      hold_locked();
    }
  }

  void on_close(const std::weak_ptr<LineConnection>& from) {
    std::lock_guard lock(mutex);
    const auto c = from.lock();
    if (c && c == conn) { hold_locked(); }
  }

  void hold_locked() {
    active = false;
    cmd = ControlCommand{};
    cmd.brake = 1.0;
  }

  void send_state_locked() {
    if (!active || paused.load() || !conn) { return; }
    VehicleState s = state;
    s.vehicle_id = vehicle_id;
    s.origin = Origin::kPhysical;
    conn->send(encode_line(StateUpdateMsg{vehicle_id, s, ++state_seq}));
    ++sent;
  }

  void physics_loop() {
    const IntegratorSettings integ{config.dt};
    const auto step_period = std::chrono::duration_cast<
        std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(config.dt));
    const auto feed_every = std::max<std::int64_t>(
        1, std::llround(1.0 / (config.dt * config.feed_rate_hz)));
    auto next = std::chrono::steady_clock::now();
    std::int64_t ticks = 0;
    while (running.load()) {
      next += step_period;
      std::this_thread::sleep_until(next);
      std::lock_guard lock(mutex);
      state = step(state, cmd, config.vehicle, integ);
      sim_time = state.timestamp;
      if (++ticks % feed_every == 0) { send_state_locked(); }
    }
  }

  EmulatorConfig config;
  asio::io_context ioc;
  tcp::acceptor acceptor;
  std::thread io_thread;
  std::thread physics_thread;
  std::atomic<bool> running{true};
  std::atomic<bool> paused{false};

  mutable std::mutex mutex;
  std::shared_ptr<LineConnection> conn;
  VehicleState state;
  ControlCommand cmd;
  std::string vehicle_id = "ego";
  std::int64_t last_cmd_seq = 0;
  std::int64_t out_seq = 0;
  std::int64_t state_seq = 0;
  std::int64_t applied = 0;
  std::int64_t sent = 0;
  Micros sim_time = 0;
  bool active = false;
};

PhysicalEmulator::PhysicalEmulator(EmulatorConfig config,
                                   const std::string& listen_address) {
  config.validate();
  impl_ = std::make_unique<Impl>(std::move(config));
  const Endpoint ep = parse_endpoint(listen_address);
  try {
    tcp::endpoint bind_ep(asio::ip::make_address(ep.host), ep.port);
    impl_->acceptor.open(bind_ep.protocol());
    impl_->acceptor.set_option(asio::socket_base::reuse_address(true));
    impl_->acceptor.bind(bind_ep);
    impl_->acceptor.listen();
  } catch (const boost::system::system_error& e) {
    throw Error("emulator: cannot listen on " + listen_address + ": " +
                e.what());
  }
  impl_->accept();
  Impl* impl = impl_.get();
  impl_->io_thread = std::thread([impl] { impl->ioc.run(); });
  impl_->physics_thread = std::thread([impl] { impl->physics_loop(); });
}

PhysicalEmulator::~PhysicalEmulator() { stop(); }

unsigned short PhysicalEmulator::port() const {
  return impl_->acceptor.local_endpoint().port();
}

void PhysicalEmulator::stop() {
  if (!impl_->running.exchange(false)) { return; }
  if (impl_->physics_thread.joinable()) { impl_->physics_thread.join(); }
  asio::post(impl_->ioc, [impl = impl_.get()] {
    boost::system::error_code ec;
    impl->acceptor.close(ec);
  });
  sever();
  asio::post(impl_->ioc, [impl = impl_.get()] { impl->ioc.stop(); });
  if (impl_->io_thread.joinable()) { impl_->io_thread.join(); }
}

VehicleState PhysicalEmulator::state() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->state;
}

std::int64_t PhysicalEmulator::commands_applied() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->applied;
}

std::int64_t PhysicalEmulator::states_sent() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->sent;
}

void PhysicalEmulator::pause_feed(bool paused) { impl_->paused = paused; }

void PhysicalEmulator::sever() {
  std::shared_ptr<LineConnection> c;
  {
    std::lock_guard lock(impl_->mutex);
    c = impl_->conn;
  }
  if (c) { c->close(); }
}

}  // namespace dtwin
