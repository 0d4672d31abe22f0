#include "dtwin/gateway.h"

#include <algorithm>
#include <set>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "dtwin/error.h"

namespace dtwin {

namespace {

using nlohmann::json;

json error_msg(const std::string& reason) {
  return {{"type", "error"}, {"reason", reason}};
}

std::string warning_id(const std::string& peer) { return "conflict:" + peer; }

}  // namespace

Outbox::Outbox(std::size_t frame_capacity) : frames_(frame_capacity) {}

void Outbox::push_control(std::string text) {
  {
    std::lock_guard lock(mutex_);
    control_.push_back(std::move(text));
  }
  notify();
}

void Outbox::push_frame(std::string text) {
  frames_.push(std::move(text));
  notify();
}

std::optional<std::string> Outbox::pop() {
  {
    std::lock_guard lock(mutex_);
    if (!control_.empty()) {
      std::string s = std::move(control_.front());
      control_.pop_front();
      return s;
    }
  }
  return frames_.pop();
}

void Outbox::set_notify(std::function<void()> fn) {
  std::lock_guard lock(mutex_);
  notify_ = std::move(fn);
}

void Outbox::notify() {
  std::function<void()> fn;
  {
    std::lock_guard lock(mutex_);
    fn = notify_;
  }
  if (fn) { fn(); }
}

GatewayHub::GatewayHub(std::size_t frame_capacity)
    : frame_capacity_(frame_capacity) {}

GatewayHub::ConnectionId GatewayHub::connect(std::shared_ptr<Outbox> outbox) {
  std::lock_guard lock(mutex_);
  const ConnectionId id = next_id_++;
  connections_[id].outbox = std::move(outbox);
  return id;
}

void GatewayHub::disconnect(ConnectionId id) {
  std::lock_guard lock(mutex_);
  auto it = connections_.find(id);
  if (it == connections_.end()) { return; }
  if (it->second.session) { registry_.release(it->second.session->session_id); }
  connections_.erase(it);
}

void GatewayHub::on_text(ConnectionId id, std::string_view text) {
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) { end = text.size(); }
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    if (!line.empty() && line.back() == '\r') { line.remove_suffix(1); }
    if (line.find_first_not_of(" \t") == std::string_view::npos) { continue; }
    json msg;
    try {
      msg = json::parse(line);
    } catch (const json::exception& e) {
      reply(id, error_msg(std::string("malformed message: ") + e.what()));
      continue;
    }
    try {
      handle(id, msg);
    } catch (const std::exception& e) {
      reply(id, error_msg(e.what()));
    }
  }
}

void GatewayHub::reply(ConnectionId id, const json& msg) {
  std::shared_ptr<Outbox> out;
  {
    std::lock_guard lock(mutex_);
    auto it = connections_.find(id);
    if (it == connections_.end()) { return; }
    out = it->second.outbox;
  }
  out->push_control(msg.dump());
}

void GatewayHub::handle(ConnectionId id, const json& msg) {
  const std::string type =
      msg.is_object() && msg.contains("type") && msg["type"].is_string()
          ? msg["type"].get<std::string>()
          : "";
  if (type == "hello") {
    std::optional<Session> existing;
    {
      std::lock_guard lock(mutex_);
      auto it = connections_.find(id);
      if (it == connections_.end()) { return; }
      existing = it->second.session;
    }
    if (existing) {
      reply(id, hello_reply(SessionRegistry::Rejection{
                    "malformed hello: session already open"}));
      return;
    }
    const auto result = registry_.hello(msg);
    if (const auto* s = std::get_if<Session>(&result)) {
      std::lock_guard lock(mutex_);
      auto it = connections_.find(id);
      if (it == connections_.end()) {
        registry_.release(s->session_id);
        return;
      }
      it->second.session = *s;
      it->second.streamer.emplace(*s);
      driver_cv_.notify_all();
    }
    reply(id, hello_reply(result));
    return;
  }
  if (type == "input") {
    std::string sid;
    {
      std::lock_guard lock(mutex_);
      auto it = connections_.find(id);
      if (it == connections_.end()) { return; }
      if (!it->second.session ||
          it->second.session->role != SessionRole::kDriver) {
        throw Error("input requires a driver session");
      }
      sid = it->second.session->session_id;
    }
    InputEvent e = input_event_from_json(msg);
    std::lock_guard lock(mutex_);
    inputs_.push_back({sid, msg.value("seq", std::int64_t{0}), std::move(e)});
    return;
  }
  if (type == "pq_submit") {
    const PqSubmission sub = pq_submission_from_json(msg);
    const json result = pq_result(sub.response);
    if (result.at("ok").get<bool>()) {
      std::lock_guard lock(mutex_);
      pq_.push_back(sub.response);
    }
    reply(id, result);
    return;
  }
  if (type == "bye") {
    std::lock_guard lock(mutex_);
    auto it = connections_.find(id);
    if (it != connections_.end() && it->second.session) {
      registry_.release(it->second.session->session_id);
      it->second.session.reset();
      it->second.streamer.reset();
    }
    return;
  }
  throw Error("unknown message type: '" + type + "'");
}

std::vector<InputMail> GatewayHub::drain_inputs() {
  std::lock_guard lock(mutex_);
  std::vector<InputMail> out(std::make_move_iterator(inputs_.begin()),
                             std::make_move_iterator(inputs_.end()));
  inputs_.clear();
  if (!out.empty()) { acked_seq_ = out.back().seq; }
  return out;
}

void GatewayHub::publish(const SceneSnapshot& snap) {
  std::lock_guard lock(mutex_);
  std::vector<std::string> raised;
  std::set<std::string> current;
  for (const auto& peer : snap.conflict_alerts) {
    const std::string id = warning_id(peer);
    current.insert(id);
    if (latch_.raise(id, "crossing vehicle " + peer + " predicted in path",
                     snap.tick)) {
      raised.push_back(id);
    }
  }
  for (const auto& w : latch_.active()) {
    if (!current.count(w.id)) { latch_.clear(w.id); }
  }
  const std::vector<Warning> active = latch_.active();
  bool emitted = false;
  for (auto& [id, conn] : connections_) {
    if (!conn.streamer) { continue; }
    for (const auto& w : active) {
      if (std::find(raised.begin(), raised.end(), w.id) != raised.end()) {
        conn.outbox->push_control(to_json(w).dump());
      }
    }
    auto frame = conn.streamer->offer(snap.tick, snap.now, snap.phase,
                                      snap.vehicles, active, acked_seq_);
    if (frame) {
      conn.outbox->push_frame(to_json(*frame).dump());
      emitted = true;
    }
  }
  if (emitted) { latch_.mark_emitted(); }
}

void GatewayHub::publish_result(const RunReport& report) {
  std::lock_guard lock(mutex_);
  const std::string text =
      json{{"type", "result"}, {"report", to_json(report)}}.dump();
  for (auto& [id, conn] : connections_) {
    if (conn.session) { conn.outbox->push_control(text); }
  }
}

std::vector<pq::PqResponse> GatewayHub::pq_submissions() const {
  std::lock_guard lock(mutex_);
  return pq_;
}

bool GatewayHub::wait_for_driver(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  return driver_cv_.wait_for(lock, timeout,
                             [&] { return registry_.driver().has_value(); });
}

// ---- websocket transport ----

namespace {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, GatewayHub& hub, std::size_t frame_capacity)
      : ws_(std::move(socket)),
        hub_(hub),
        outbox_(std::make_shared<Outbox>(frame_capacity)) {}

  ~WsSession() { detach(); }

  void start() {
    ws_.async_accept(
        beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) { return; }
    ws_.text(true);
    std::weak_ptr<WsSession> weak = shared_from_this();
    auto ex = ws_.get_executor();
    outbox_->set_notify([weak, ex] {
      asio::post(ex, [weak] {
        if (auto self = weak.lock()) { self->pump(); }
      });
    });
    id_ = hub_.connect(outbox_);
    attached_ = true;
    read();
  }

  void read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read,
                                                      shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      detach();
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    hub_.on_text(id_, text);
    read();
  }

  void pump() {
    if (writing_ || !attached_) { return; }
    auto next = outbox_->pop();
    if (!next) { return; }
    writing_ = true;
    current_ = std::move(*next);
    ws_.async_write(asio::buffer(current_),
                    beast::bind_front_handler(&WsSession::on_write,
                                              shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    writing_ = false;
    if (ec) {
      detach();
      return;
    }
    pump();
  }

  void detach() {
    if (!attached_) { return; }
    attached_ = false;
    outbox_->set_notify(nullptr);
    hub_.disconnect(id_);
  }

  websocket::stream<tcp::socket> ws_;
  GatewayHub& hub_;
  std::shared_ptr<Outbox> outbox_;
  beast::flat_buffer buffer_;
  std::string current_;
  GatewayHub::ConnectionId id_ = 0;
  bool attached_ = false;
  bool writing_ = false;
};

}  // namespace

struct GatewayServer::Impl {
  Impl(GatewayHub& h, const std::string& address, unsigned short port)
      : hub(h), acceptor(ioc) {
    tcp::endpoint ep(asio::ip::make_address(address), port);
    acceptor.open(ep.protocol());
    acceptor.set_option(asio::socket_base::reuse_address(true));
    acceptor.bind(ep);
    acceptor.listen();
    accept();
    thread = std::thread([this] { ioc.run(); });
  }

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (!ec) {
        std::make_shared<WsSession>(std::move(socket), hub,
                                    hub.frame_capacity())
            ->start();
      }
      if (acceptor.is_open()) { accept(); }
    });
  }

  GatewayHub& hub;
  asio::io_context ioc;
  tcp::acceptor acceptor;
  std::thread thread;
};

GatewayServer::GatewayServer(GatewayHub& hub, const std::string& address,
                             unsigned short port) {
  try {
    impl_ = std::make_unique<Impl>(hub, address, port);
  } catch (const boost::system::system_error& e) {
    throw Error(std::string("gateway: ") + e.what());
  }
}

GatewayServer::~GatewayServer() { stop(); }

unsigned short GatewayServer::port() const {
  return impl_->acceptor.local_endpoint().port();
}

void GatewayServer::stop() {
  if (!impl_ || !impl_->thread.joinable()) { return; }
  asio::post(impl_->ioc, [this] {
    beast::error_code ec;
    impl_->acceptor.close(ec);
  });
  impl_->ioc.stop();
  impl_->thread.join();
}

// ---- hv command source ----

json to_json(const std::vector<InputLogEntry>& log) {
  json out = json::array();
  for (const auto& e : log) {
    out.push_back({{"now", e.now},
                   {"dt", e.dt},
                   {"event", e.event ? input_event_to_json(*e.event, 0)
                                     : json(nullptr)},
                   {"cmd",
                    {{"steering", e.cmd.steering},
                     {"throttle", e.cmd.throttle},
                     {"brake", e.cmd.brake}}}});
  }
  return out;
}

std::vector<InputLogEntry> input_log_from_json(const json& j) {
  std::vector<InputLogEntry> out;
  try {
    for (const auto& e : j) {
      InputLogEntry entry;
      entry.now = e.at("now").get<Micros>();
      entry.dt = e.at("dt").get<double>();
      if (!e.at("event").is_null()) {
        entry.event = input_event_from_json(e.at("event"));
      }
      entry.cmd.steering = e.at("cmd").at("steering").get<double>();
      entry.cmd.throttle = e.at("cmd").at("throttle").get<double>();
      entry.cmd.brake = e.at("cmd").at("brake").get<double>();
      out.push_back(std::move(entry));
    }
  } catch (const json::exception& ex) {
    throw Error(std::string("input log: ") + ex.what());
  }
  return out;
}

std::vector<ControlCommand> replay_inputs(const std::vector<InputLogEntry>& log,
                                          const MappingProfile& profile) {
  std::vector<ControlCommand> out;
  ControlCommand cmd;
  for (const auto& e : log) {
    if (e.event) { cmd = map_input(cmd, *e.event, profile, e.dt); }
    out.push_back(cmd);
  }
  return out;
}

DriverSource::DriverSource(GatewayHub& hub, double dt,
                           std::optional<MappingProfile> profile)
    : hub_(hub), dt_(dt), override_(std::move(profile)) {}

void DriverSource::on_start() {
  driver_ = hub_.driver();
  if (!driver_) { throw Error("hv mode requires a connected driver"); }
  if (override_) {
    if (override_->modality != driver_->modality) {
      throw Error(std::string("driver modality ") +
                  to_string(driver_->modality) + " does not match profile " +
                  to_string(override_->modality));
    }
    profile_ = *override_;
  } else {
    profile_ = default_profile(driver_->modality);
  }
  profile_.validate();
}

ControlCommand DriverSource::command(const TickView& tick) {
  for (auto& mail : hub_.drain_inputs()) {
    if (driver_ && mail.session_id == driver_->session_id) {
      latest_ = std::move(mail.event);
    }
  }
  const auto current = hub_.driver();
  if (latest_ && (!current || current->session_id != driver_->session_id)) {
    // Driver gone: release every control.
    InputEvent neutral;
    neutral.device = profile_.modality;
    neutral.t = latest_->t;
    latest_ = neutral;
  }
  if (latest_) { cmd_ = map_input(cmd_, *latest_, profile_, dt_); }
  log_.push_back({tick.now, latest_, dt_, cmd_});
  return cmd_;
}

std::string DriverSource::session_id() const {
  return driver_ ? driver_->session_id : std::string();
}

void GatewayObserver::on_tick(const SceneSnapshot& snapshot) {
  hub_.publish(snapshot);
}

void GatewayObserver::on_finish(const RunReport& report) {
  hub_.publish_result(report);
}

}  // namespace dtwin
