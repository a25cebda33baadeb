#include "fab/toolpath.hpp"

#include <cmath>
#include <stdexcept>

#include "fab/errors.hpp"
#include "fab/text.hpp"

namespace fab {

namespace {

// Slack for coordinates computed in floating point that sit on a boundary.
constexpr double kEnvelopeSlack = 1e-9;

bool outside(double v, double max) { return v < -kEnvelopeSlack || v > max + kEnvelopeSlack; }

}  // namespace

std::string_view to_string(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::kExtrude: return "extrude";
    case SegmentKind::kTravel: return "travel";
    case SegmentKind::kRetract: return "retract";
  }
  return "travel";
}

std::string_view to_string(BoundsMode mode) {
  return mode == BoundsMode::kStrict ? "strict" : "permissive";
}

std::optional<BoundsMode> parse_bounds_mode(std::string_view s) {
  if (s == "strict") return BoundsMode::kStrict;
  if (s == "permissive") return BoundsMode::kPermissive;
  return std::nullopt;
}

double default_extrusion(const MachineProfile& profile, double move_length) {
  if (!(move_length >= 0) || !std::isfinite(move_length)) {
    throw ArgumentError("defaultExtrusion: move length must be finite and >= 0");
  }
  const double ratio = profile.nozzle_radius / profile.filament_radius;
  return move_length * ratio * ratio;
}

std::optional<Segment> make_segment(const Position& start, const Position& end, double feedrate,
                                    std::size_t source) {
  const double delta_e = end.e - start.e;
  if (start.xyz() == end.xyz() && delta_e == 0.0) return std::nullopt;
  Segment s;
  s.start = start;
  s.end = end;
  s.feedrate = feedrate;
  s.delta_e = delta_e;
  s.kind = delta_e > 0 ? SegmentKind::kExtrude
                       : (delta_e < 0 ? SegmentKind::kRetract : SegmentKind::kTravel);
  s.source = source;
  return s;
}

SegmentDeriver::SegmentDeriver(MachineProfile profile) : profile_(std::move(profile)) {}

void SegmentDeriver::emit(const Position& end, double feedrate, std::size_t index, bool prime,
                          std::vector<Segment>& out, std::vector<Diagnostic>& diagnostics,
                          const char* what) {
  auto seg = make_segment(cursor_, end, feedrate, index);
  if (!seg) {
    diagnostics.push_back({index, std::string("zero-length ") + what + " dropped"});
    return;
  }
  seg->prime = prime;
  out.push_back(*seg);
  cursor_ = end;
}

void SegmentDeriver::step(const Command& cmd, std::size_t index, std::vector<Segment>& out,
                          std::vector<Diagnostic>& diagnostics) {
  const auto& p = profile_;
  if (const auto* c = std::get_if<MoveExtrude>(&cmd)) {
    if (retracted_) {
      Position primed = cursor_;
      primed.e += p.retract_length;
      emit(primed, p.retract_speed, index, true, out, diagnostics, "prime");
      retracted_ = false;
    }
    const double de = c->e_amount ? *c->e_amount
                                  : default_extrusion(p, distance(cursor_.xyz(), c->target));
    const Position end{c->target.x, c->target.y, c->target.z, cursor_.e + de};
    emit(end, c->speed.value_or(p.default_print_speed), index, false, out, diagnostics,
         "extrusion");
  } else if (const auto* c = std::get_if<MoveRetract>(&cmd)) {
    if (!retracted_ && p.retract_length > 0) {
      Position pulled = cursor_;
      pulled.e -= p.retract_length;
      emit(pulled, p.retract_speed, index, false, out, diagnostics, "retraction");
      retracted_ = true;
    }
    const Position end{c->target.x, c->target.y, c->target.z, cursor_.e};
    emit(end, c->speed.value_or(p.default_travel_speed), index, false, out, diagnostics, "travel");
  } else if (const auto* c = std::get_if<Travel>(&cmd)) {
    const Position end{c->target.x, c->target.y, c->target.z, cursor_.e};
    emit(end, c->speed.value_or(p.default_travel_speed), index, false, out, diagnostics, "travel");
  } else if (std::holds_alternative<AutoHome>(cmd)) {
    cursor_.x = cursor_.y = cursor_.z = 0.0;
  }
}

Derivation derive_segments(const MachineProfile& profile, std::span<const Command> commands) {
  SegmentDeriver deriver(profile);
  Derivation d;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    deriver.step(commands[i], i, d.segments, d.diagnostics);
  }
  d.cursor = deriver.cursor();
  return d;
}

ToolpathStats compute_stats(std::span<const Segment> segments) {
  ToolpathStats s;
  for (const auto& seg : segments) {
    s.total_e += seg.delta_e;
    s.bounds.extend(seg.start.xyz());
    s.bounds.extend(seg.end.xyz());
    switch (seg.kind) {
      case SegmentKind::kExtrude:
        s.extrude_length += seg.length();
        ++s.extrude_segments;
        break;
      case SegmentKind::kTravel:
        s.travel_length += seg.length();
        ++s.travel_segments;
        break;
      case SegmentKind::kRetract:
        s.travel_length += seg.length();
        ++s.retract_segments;
        break;
    }
  }
  return s;
}

std::vector<Violation> bounds_check(const MachineProfile& profile,
                                    std::span<const Segment> segments) {
  std::vector<Violation> out;
  auto check = [&](std::size_t index, const Point3& p) {
    Violation v;
    v.segment = index;
    v.point = p;
    v.axes = {outside(p.x, profile.max_x), outside(p.y, profile.max_y),
              outside(p.z, profile.max_z)};
    if (v.axes[0] || v.axes[1] || v.axes[2]) out.push_back(v);
  };
  std::optional<Point3> last;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const Point3 a = segments[i].start.xyz();
    const Point3 b = segments[i].end.xyz();
    if (!last || !(*last == a)) check(i, a);
    if (!(a == b)) check(i, b);
    last = b;
  }
  return out;
}

std::vector<Violation> bounds_check(const Toolpath& toolpath) {
  return bounds_check(toolpath.profile(), toolpath.segments());
}

Toolpath::Toolpath(MachineProfile profile, BoundsMode mode)
    : profile_((validate(profile), std::move(profile))), mode_(mode), deriver_(profile_) {}

Toolpath& Toolpath::append(Command cmd) {
  validate(cmd);
  const std::size_t index = commands_.size();
  SegmentDeriver next = deriver_;
  std::vector<Segment> added;
  std::vector<Diagnostic> notes;
  next.step(cmd, index, added, notes);

  const auto violations = bounds_check(profile_, added);
  if (!violations.empty()) {
    const auto& v = violations.front();
    std::string msg = std::string(command_name(cmd)) + " leaves the work envelope at (" +
                      text::format_fixed(v.point.x, 3) + ", " + text::format_fixed(v.point.y, 3) +
                      ", " + text::format_fixed(v.point.z, 3) + ")";
    if (mode_ == BoundsMode::kStrict) throw EnvelopeError(msg);
    notes.push_back({index, "warning: " + msg});
  }

  commands_.push_back(std::move(cmd));
  segments_.insert(segments_.end(), added.begin(), added.end());
  diagnostics_.insert(diagnostics_.end(), notes.begin(), notes.end());
  deriver_ = std::move(next);
  return *this;
}

Toolpath& Toolpath::move_extrude(double x, double y, double z, std::optional<double> speed,
                                 std::optional<double> e_amount) {
  return append(MoveExtrude{{x, y, z}, speed, e_amount});
}

Toolpath& Toolpath::move_retract(double x, double y, double z, std::optional<double> speed) {
  return append(MoveRetract{{x, y, z}, speed});
}

Toolpath& Toolpath::move(double x, double y, double z, std::optional<double> speed) {
  return append(Travel{{x, y, z}, speed});
}

Toolpath& Toolpath::set_max_acceleration(double ax, double ay, double az,
                                         std::optional<double> ae) {
  return append(SetMaxAcceleration{ax, ay, az, ae});
}

Toolpath& Toolpath::set_starting_acceleration(double accel) {
  return append(SetStartingAcceleration{accel});
}

Toolpath& Toolpath::set_jerk(double jx, double jy, double jz, std::optional<double> je) {
  return append(SetJerk{jx, jy, jz, je});
}

Toolpath& Toolpath::set_nozzle_temp(double celsius, bool wait) {
  return append(SetNozzleTemp{celsius, wait});
}

Toolpath& Toolpath::set_bed_temp(double celsius, bool wait) {
  return append(SetBedTemp{celsius, wait});
}

Toolpath& Toolpath::auto_home() { return append(AutoHome{}); }

Toolpath& Toolpath::raw(std::string line) { return append(Raw{std::move(line)}); }

}  // namespace fab
