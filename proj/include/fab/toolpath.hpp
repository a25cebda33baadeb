#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fab/command.hpp"
#include "fab/geometry.hpp"
#include "fab/profile.hpp"

namespace fab {

enum class SegmentKind { kExtrude, kTravel, kRetract };

std::string_view to_string(SegmentKind kind);

// Geometric realization of a motion command.
//   kExtrude => delta_e > 0, kTravel => delta_e == 0, kRetract => delta_e < 0.
// A prime is the stationary extrusion that undoes a retraction.
struct Segment {
  Position start;
  Position end;
  double feedrate = 0.0;  // mm/s
  double delta_e = 0.0;
  SegmentKind kind = SegmentKind::kTravel;
  bool prime = false;
  std::size_t source = 0;  // index of the originating command (or line)

  double length() const { return distance(start, end); }
  friend bool operator==(const Segment&, const Segment&) = default;
};

// Non-fatal note tied to a command index (or a line number for parsed text).
struct Diagnostic {
  std::size_t index = 0;
  std::string message;
  friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

// Filament feed for a single-width bead of nozzle diameter along a move:
// length * (nozzle_radius / filament_radius)^2.
double default_extrusion(const MachineProfile& profile, double move_length);

// Classifies one realized motion and drops it when it neither moves nor
// extrudes. Shared by command derivation and G-code interpretation.
std::optional<Segment> make_segment(const Position& start, const Position& end, double feedrate,
                                    std::size_t source);

// Steps commands into segments, tracking the authoring cursor and the
// retraction state. Copyable so callers can derive speculatively.
class SegmentDeriver {
 public:
  explicit SegmentDeriver(MachineProfile profile);

  void step(const Command& cmd, std::size_t index, std::vector<Segment>& out,
            std::vector<Diagnostic>& diagnostics);

  const Position& cursor() const { return cursor_; }
  bool retracted() const { return retracted_; }
  const MachineProfile& profile() const { return profile_; }

 private:
  void emit(const Position& end, double feedrate, std::size_t index, bool prime,
            std::vector<Segment>& out, std::vector<Diagnostic>& diagnostics, const char* what);

  MachineProfile profile_;
  Position cursor_;
  bool retracted_ = false;
};

struct Derivation {
  std::vector<Segment> segments;
  Position cursor;
  std::vector<Diagnostic> diagnostics;
};

Derivation derive_segments(const MachineProfile& profile, std::span<const Command> commands);

struct ToolpathStats {
  double extrude_length = 0.0;
  double travel_length = 0.0;
  double total_e = 0.0;
  std::size_t extrude_segments = 0;
  std::size_t travel_segments = 0;
  std::size_t retract_segments = 0;
  BoundingBox bounds;
  friend bool operator==(const ToolpathStats&, const ToolpathStats&) = default;
};

ToolpathStats compute_stats(std::span<const Segment> segments);

enum class BoundsMode { kStrict, kPermissive };

std::string_view to_string(BoundsMode mode);
std::optional<BoundsMode> parse_bounds_mode(std::string_view s);

// A point of the realized path with at least one coordinate outside
// [0, max] on its axis.
struct Violation {
  std::size_t segment = 0;
  Point3 point;
  std::array<bool, 3> axes{};  // x, y, z
  friend bool operator==(const Violation&, const Violation&) = default;
};

std::vector<Violation> bounds_check(const MachineProfile& profile, std::span<const Segment> segments);

// A program under construction for one machine. Authoring operations
// validate, append the command and derive its segments; in strict bounds
// mode a command whose segments leave the envelope is rejected with
// EnvelopeError and nothing is appended.
class Toolpath {
 public:
  explicit Toolpath(MachineProfile profile, BoundsMode mode = BoundsMode::kStrict);

  Toolpath& move_extrude(double x, double y, double z, std::optional<double> speed = std::nullopt,
                         std::optional<double> e_amount = std::nullopt);
  Toolpath& move_retract(double x, double y, double z, std::optional<double> speed = std::nullopt);
  Toolpath& move(double x, double y, double z, std::optional<double> speed = std::nullopt);
  Toolpath& set_max_acceleration(double ax, double ay, double az,
                                 std::optional<double> ae = std::nullopt);
  Toolpath& set_starting_acceleration(double accel);
  Toolpath& set_jerk(double jx, double jy, double jz, std::optional<double> je = std::nullopt);
  Toolpath& set_nozzle_temp(double celsius, bool wait = false);
  Toolpath& set_bed_temp(double celsius, bool wait = false);
  Toolpath& auto_home();
  Toolpath& raw(std::string line);
  Toolpath& append(Command cmd);

  const MachineProfile& profile() const { return profile_; }
  BoundsMode bounds_mode() const { return mode_; }
  const std::vector<Command>& commands() const { return commands_; }
  const std::vector<Segment>& segments() const { return segments_; }
  const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }
  const Position& cursor() const { return deriver_.cursor(); }
  ToolpathStats stats() const { return compute_stats(segments_); }

 private:
  MachineProfile profile_;
  BoundsMode mode_;
  std::vector<Command> commands_;
  std::vector<Segment> segments_;
  std::vector<Diagnostic> diagnostics_;
  SegmentDeriver deriver_;
};

std::vector<Violation> bounds_check(const Toolpath& toolpath);

}  // namespace fab
