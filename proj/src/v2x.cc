#include "dtwin/v2x.h"

#include <algorithm>
#include <cmath>

#include "dtwin/error.h"

namespace dtwin {

void ChannelModel::validate() const {
  if (!(range > 0.0)) { throw Error("channel: range must be > 0"); }
  if (!(latency_base_ms >= 0.0) || !(latency_jitter_ms >= 0.0)) {
    throw Error("channel: latency must be >= 0");
  }
  if (!(loss_prob >= 0.0 && loss_prob < 1.0)) {
    throw Error("channel: loss_prob must be in [0, 1)");
  }
}

ChannelModel channel_model_from_json(const nlohmann::json& j) {
  ChannelModel c;
  c.range = j.value("range", c.range);
  c.latency_base_ms = j.value("latency_base_ms", c.latency_base_ms);
  c.latency_jitter_ms = j.value("latency_jitter_ms", c.latency_jitter_ms);
  c.loss_prob = j.value("loss_prob", c.loss_prob);
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  c.validate();
  return c;
}

nlohmann::json to_json(const ChannelModel& c) {
  return {{"range", c.range},
          {"latency_base_ms", c.latency_base_ms},
          {"latency_jitter_ms", c.latency_jitter_ms},
          {"loss_prob", c.loss_prob},
          {"rng_seed", c.rng_seed}};
}

V2xBus::V2xBus(ChannelModel model) : model_(model), rng_(model.rng_seed) {
  model_.validate();
}

double V2xBus::uniform01() {
  // 53 high bits -> [0, 1); independent of the standard library's
  // distribution implementations.
  return static_cast<double>(rng_() >> 11) * 0x1.0p-53;
}

void V2xBus::register_receiver(const std::string& id) { queues_[id]; }

std::vector<Delivery> V2xBus::broadcast(const BasicSafetyMsg& msg,
                                        Vec2 sender_pos,
                                        std::vector<Receiver> receivers) {
  std::sort(receivers.begin(), receivers.end(),
            [](const Receiver& a, const Receiver& b) { return a.id < b.id; });
  std::vector<Delivery> out;
  for (const Receiver& r : receivers) {
    if (r.id == msg.sender_id) { continue; }
    if (distance(r.position, sender_pos) > model_.range) { continue; }
    const double loss_draw = uniform01();
    const double jitter_draw = uniform01();
    if (loss_draw < model_.loss_prob) { continue; }
    const double latency_ms =
        std::max(0.0, model_.latency_base_ms +
                          (2.0 * jitter_draw - 1.0) * model_.latency_jitter_ms);
    const Micros due =
        msg.timestamp + static_cast<Micros>(std::llround(latency_ms * 1000.0));
    queues_[r.id].push_back({due, next_order_++, msg});
    out.push_back({r.id, due});
  }
  return out;
}

std::vector<BasicSafetyMsg> V2xBus::poll(const std::string& receiver_id,
                                         Micros now) {
  auto it = queues_.find(receiver_id);
  if (it == queues_.end()) { throw Error("unknown receiver: " + receiver_id); }
  auto& q = it->second;
  auto due_end = std::stable_partition(
      q.begin(), q.end(), [now](const Pending& p) { return p.due <= now; });
  std::vector<Pending> ready(std::make_move_iterator(q.begin()),
                             std::make_move_iterator(due_end));
  q.erase(q.begin(), due_end);
  std::sort(ready.begin(), ready.end(), [](const Pending& a, const Pending& b) {
    return a.due != b.due ? a.due < b.due : a.order < b.order;
  });
  std::vector<BasicSafetyMsg> out;
  out.reserve(ready.size());
  for (auto& p : ready) { out.push_back(std::move(p.msg)); }
  return out;
}

std::size_t V2xBus::in_flight(const std::string& receiver_id) const {
  auto it = queues_.find(receiver_id);
  return it == queues_.end() ? 0 : it->second.size();
}

}  // namespace dtwin
