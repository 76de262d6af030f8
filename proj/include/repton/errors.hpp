#pragma once

#include <stdexcept>
#include <string>

namespace repton {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// singular potential / mobility evaluated at a nonpositive (or sub-floor) value
struct PositivityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BlowUpError : std::runtime_error {
  BlowUpError(const std::string& what, long at_step)
      : std::runtime_error(what), step(at_step) {}
  long step;
};

struct BoundaryCollapseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PreconditionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace repton
