#include "fab/command.hpp"

#include <cmath>

#include "fab/errors.hpp"

namespace fab {

namespace {

void require(bool ok, std::string_view cmd, const std::string& what) {
  if (!ok) throw ArgumentError(std::string(cmd) + ": " + what);
}

void check_target(const Point3& p, std::string_view cmd) {
  require(is_finite(p), cmd, "coordinates must be finite");
}

void check_positive(std::optional<double> v, std::string_view cmd, const char* what) {
  if (v) require(std::isfinite(*v) && *v > 0, cmd, std::string(what) + " must be > 0");
}

void check_positive(double v, std::string_view cmd, const char* what) {
  check_positive(std::optional<double>(v), cmd, what);
}

struct Validator {
  void operator()(const MoveExtrude& c) const {
    check_target(c.target, "moveExtrude");
    check_positive(c.speed, "moveExtrude", "speed");
    check_positive(c.e_amount, "moveExtrude", "extrusion amount");
  }
  void operator()(const MoveRetract& c) const {
    check_target(c.target, "moveRetract");
    check_positive(c.speed, "moveRetract", "speed");
  }
  void operator()(const Travel& c) const {
    check_target(c.target, "move");
    check_positive(c.speed, "move", "speed");
  }
  void operator()(const SetNozzleTemp& c) const {
    require(std::isfinite(c.celsius) && c.celsius >= 0 && c.celsius <= kMaxNozzleTemp,
            "setNozzleTemp", "temperature must be within [0, 300]");
  }
  void operator()(const SetBedTemp& c) const {
    require(std::isfinite(c.celsius) && c.celsius >= 0 && c.celsius <= kMaxBedTemp, "setBedTemp",
            "temperature must be within [0, 120]");
  }
  void operator()(const AutoHome&) const {}
  void operator()(const SetMaxAcceleration& c) const {
    check_positive(c.x, "setMaxAcceleration", "x acceleration");
    check_positive(c.y, "setMaxAcceleration", "y acceleration");
    check_positive(c.z, "setMaxAcceleration", "z acceleration");
    check_positive(c.e, "setMaxAcceleration", "e acceleration");
  }
  void operator()(const SetStartingAcceleration& c) const {
    check_positive(c.accel, "setStartingAcceleration", "acceleration");
  }
  void operator()(const SetJerk& c) const {
    check_positive(c.x, "setJerk", "x jerk");
    check_positive(c.y, "setJerk", "y jerk");
    check_positive(c.z, "setJerk", "z jerk");
    check_positive(c.e, "setJerk", "e jerk");
  }
  void operator()(const Raw& c) const {
    require(c.line.find_first_of("\r\n") == std::string::npos, "raw", "line terminators not allowed");
  }
};

struct Namer {
  std::string_view operator()(const MoveExtrude&) const { return "move_extrude"; }
  std::string_view operator()(const MoveRetract&) const { return "move_retract"; }
  std::string_view operator()(const Travel&) const { return "travel"; }
  std::string_view operator()(const SetNozzleTemp&) const { return "set_nozzle_temp"; }
  std::string_view operator()(const SetBedTemp&) const { return "set_bed_temp"; }
  std::string_view operator()(const AutoHome&) const { return "auto_home"; }
  std::string_view operator()(const SetMaxAcceleration&) const { return "set_max_acceleration"; }
  std::string_view operator()(const SetStartingAcceleration&) const {
    return "set_starting_acceleration";
  }
  std::string_view operator()(const SetJerk&) const { return "set_jerk"; }
  std::string_view operator()(const Raw&) const { return "raw"; }
};

}  // namespace

void validate(const Command& cmd) { std::visit(Validator{}, cmd); }

std::string_view command_name(const Command& cmd) { return std::visit(Namer{}, cmd); }

bool is_motion(const Command& cmd) {
  return std::holds_alternative<MoveExtrude>(cmd) || std::holds_alternative<MoveRetract>(cmd) ||
         std::holds_alternative<Travel>(cmd);
}

}  // namespace fab
