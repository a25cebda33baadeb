#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "fab/geometry.hpp"

namespace fab {

// Speeds are mm/s, accelerations mm/s^2, temperatures degrees Celsius.

struct MoveExtrude {
  Point3 target;
  std::optional<double> speed;
  // Explicit filament feed for this move; default is computed from length.
  std::optional<double> e_amount;
  friend bool operator==(const MoveExtrude&, const MoveExtrude&) = default;
};

// Retract, travel to target, and prime before the next extrusion.
struct MoveRetract {
  Point3 target;
  std::optional<double> speed;
  friend bool operator==(const MoveRetract&, const MoveRetract&) = default;
};

struct Travel {
  Point3 target;
  std::optional<double> speed;
  friend bool operator==(const Travel&, const Travel&) = default;
};

struct SetNozzleTemp {
  double celsius = 0.0;
  bool wait = false;
  friend bool operator==(const SetNozzleTemp&, const SetNozzleTemp&) = default;
};

struct SetBedTemp {
  double celsius = 0.0;
  bool wait = false;
  friend bool operator==(const SetBedTemp&, const SetBedTemp&) = default;
};

struct AutoHome {
  friend bool operator==(const AutoHome&, const AutoHome&) = default;
};

struct SetMaxAcceleration {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  std::optional<double> e;
  friend bool operator==(const SetMaxAcceleration&, const SetMaxAcceleration&) = default;
};

struct SetStartingAcceleration {
  double accel = 0.0;
  friend bool operator==(const SetStartingAcceleration&, const SetStartingAcceleration&) = default;
};

struct SetJerk {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  std::optional<double> e;
  friend bool operator==(const SetJerk&, const SetJerk&) = default;
};

// One G-code line passed through verbatim.
struct Raw {
  std::string line;
  friend bool operator==(const Raw&, const Raw&) = default;
};

using Command = std::variant<MoveExtrude, MoveRetract, Travel, SetNozzleTemp, SetBedTemp,
                             AutoHome, SetMaxAcceleration, SetStartingAcceleration, SetJerk,
                             Raw>;

inline constexpr double kMaxNozzleTemp = 300.0;
inline constexpr double kMaxBedTemp = 120.0;

// Throws ArgumentError when the command violates its value invariants.
void validate(const Command& cmd);

std::string_view command_name(const Command& cmd);

bool is_motion(const Command& cmd);

// A raw line of this form makes the host pause for operator acknowledgment
// instead of being sent to the machine.
inline constexpr std::string_view kPauseDirective = ";@pause";

inline bool is_pause_directive(std::string_view line) {
  return line.substr(0, kPauseDirective.size()) == kPauseDirective;
}

}  // namespace fab
