#pragma once

#include <string>
#include <string_view>
#include <variant>

#include <nlohmann/json.hpp>

#include "dtwin/twin_thread.h"
#include "dtwin/v2x.h"

namespace dtwin {

/// Opens a session on the digital thread. `spawn`, when present, resets the
/// physical endpoint to that pose at rest.
struct HelloMsg {
  std::string vehicle_id;
  std::int64_t seq = 0;
  Micros t_us = 0;
  std::string role;  // "digital" | "physical"
  std::optional<Pose2D> spawn;

  friend bool operator==(const HelloMsg&, const HelloMsg&) = default;
};

struct ByeMsg {
  std::string vehicle_id;
  std::int64_t seq = 0;
  Micros t_us = 0;
  std::string reason;

  friend bool operator==(const ByeMsg&, const ByeMsg&) = default;
};

using WireMessage =
    std::variant<StateUpdateMsg, CommandMsg, HelloMsg, ByeMsg, BasicSafetyMsg>;

/// One message as a single-line JSON object (no trailing newline).
nlohmann::json to_wire_json(const WireMessage& msg);

/// JSON text plus '\n'.
std::string encode_line(const WireMessage& msg);

/// Parses one line (trailing '\r'/'\n' tolerated). Throws
/// Error("malformed message: ...") on bad JSON, unknown type or missing
/// fields.
WireMessage decode_line(std::string_view line);
WireMessage from_wire_json(const nlohmann::json& j);

}  // namespace dtwin
