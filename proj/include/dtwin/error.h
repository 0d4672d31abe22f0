#pragma once

#include <stdexcept>
#include <string>

namespace dtwin {

/// Base class for every error raised by the library. Messages are short,
/// stable strings that tests and the CLI match on.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dtwin
