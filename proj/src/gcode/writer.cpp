#include <algorithm>
#include <cmath>

#include "fab/gcode.hpp"
#include "fab/text.hpp"

namespace fab::gcode {

std::string format_coord(double v) { return text::format_fixed(v, 3); }

std::string format_extrusion(double v) { return text::format_fixed(v, 5); }

int feedrate_mm_min(double speed_mm_s) {
  return static_cast<int>(std::max(1L, std::lround(speed_mm_s * 60.0)));
}

Writer::Writer(MachineProfile profile) : deriver_(std::move(profile)) {}

std::string Writer::motion_line(const Segment& seg) {
  const bool rel = interp_.modal().positioning == Mode::kRelative;
  const bool rel_e = interp_.modal().extruder == Mode::kRelative;
  const Position& at = interp_.position();
  const bool stationary = seg.start.xyz() == seg.end.xyz();

  std::string line;
  if (seg.kind == SegmentKind::kTravel) {
    line = "G0";
  } else {
    line = "G1";
  }
  if (!(stationary && seg.kind != SegmentKind::kTravel)) {
    line += " X" + format_coord(rel ? seg.end.x - at.x : seg.end.x);
    line += " Y" + format_coord(rel ? seg.end.y - at.y : seg.end.y);
    line += " Z" + format_coord(rel ? seg.end.z - at.z : seg.end.z);
  }
  if (seg.kind != SegmentKind::kTravel) {
    line += " E" + format_extrusion(rel_e ? seg.delta_e : seg.end.e - e_offset_);
  }
  const int f = feedrate_mm_min(seg.feedrate);
  if (interp_.modal().last_feedrate != f) line += " F" + std::to_string(f);
  return line;
}

void Writer::track(const std::string& line) {
  auto parsed = parse_block(line);
  if (parsed.block) interp_.apply(*parsed.block);
}

std::vector<std::string> Writer::write(const Command& cmd) {
  validate(cmd);
  const std::size_t index = index_++;
  std::vector<std::string> lines;
  auto emit = [&](std::string line) {
    track(line);
    lines.push_back(std::move(line));
  };
  auto num = [](double v) { return text::format_shortest(v); };

  std::vector<Segment> segs;
  std::vector<Diagnostic> diags;
  deriver_.step(cmd, index, segs, diags);
  if (is_motion(cmd)) {
    for (const auto& seg : segs) emit(motion_line(seg));
    return lines;
  }

  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, SetNozzleTemp>) {
          emit((c.wait ? "M109 S" : "M104 S") + num(c.celsius));
        } else if constexpr (std::is_same_v<T, SetBedTemp>) {
          emit((c.wait ? "M190 S" : "M140 S") + num(c.celsius));
        } else if constexpr (std::is_same_v<T, AutoHome>) {
          emit("G28");
        } else if constexpr (std::is_same_v<T, SetMaxAcceleration>) {
          std::string l = "M201 X" + num(c.x) + " Y" + num(c.y) + " Z" + num(c.z);
          if (c.e) l += " E" + num(*c.e);
          emit(l);
        } else if constexpr (std::is_same_v<T, SetStartingAcceleration>) {
          emit("M204 P" + num(c.accel));
        } else if constexpr (std::is_same_v<T, SetJerk>) {
          std::string l = "M205 X" + num(c.x) + " Y" + num(c.y) + " Z" + num(c.z);
          if (c.e) l += " E" + num(*c.e);
          emit(l);
        } else if constexpr (std::is_same_v<T, Raw>) {
          const double before = interp_.position().e;
          emit(c.line);
          if (interp_.position().e != before) {
            e_offset_ = deriver_.cursor().e - interp_.position().e;
          }
        }
      },
      cmd);
  return lines;
}

std::vector<std::vector<std::string>> serialize_commands(const MachineProfile& profile,
                                                         std::span<const Command> commands) {
  Writer w(profile);
  std::vector<std::vector<std::string>> out;
  out.reserve(commands.size());
  for (const auto& c : commands) out.push_back(w.write(c));
  return out;
}

std::string serialize_program(const MachineProfile& profile, std::span<const Command> commands) {
  std::string out;
  for (const auto& lines : serialize_commands(profile, commands)) {
    for (const auto& l : lines) {
      out += l;
      out += '\n';
    }
  }
  return out;
}

std::string serialize_program(const Toolpath& toolpath) {
  return serialize_program(toolpath.profile(), toolpath.commands());
}

}  // namespace fab::gcode
