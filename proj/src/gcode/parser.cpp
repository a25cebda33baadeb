#include <cmath>

#include "fab/gcode.hpp"
#include "fab/text.hpp"

namespace fab::gcode {

namespace {

constexpr double kRetractTolerance = 1e-5;

struct Entry {
  std::size_t line_no = 0;
  std::string text;  // trimmed source line
  std::optional<Block> block;
};

bool is_move(const Block& b) { return b.letter == 'G' && (b.code == 0 || b.code == 1); }

bool only_words(const Block& b, std::string_view allowed) {
  for (const auto& w : b.words) {
    if (allowed.find(w.letter) == std::string_view::npos) return false;
  }
  return true;
}

std::optional<double> positive(const Block& b, char l) {
  const Word* w = b.find(l);
  if (!w || !(w->value > 0)) return std::nullopt;
  return w->value;
}

// Typed form of a non-motion block, or nullopt when it must stay raw.
std::optional<Command> lift_setting(const Block& b) {
  const auto temp = [&](double max) -> std::optional<double> {
    const Word* s = b.find('S');
    if (!s || !only_words(b, "S") || s->value < 0 || s->value > max) return std::nullopt;
    return s->value;
  };
  if (b.letter == 'G' && b.code == 28 && b.words.empty()) return AutoHome{};
  if (b.letter != 'M') return std::nullopt;
  switch (b.code) {
    case 104:
    case 109:
      if (auto t = temp(kMaxNozzleTemp)) return SetNozzleTemp{*t, b.code == 109};
      return std::nullopt;
    case 140:
    case 190:
      if (auto t = temp(kMaxBedTemp)) return SetBedTemp{*t, b.code == 190};
      return std::nullopt;
    case 201:
    case 205: {
      auto x = positive(b, 'X'), y = positive(b, 'Y'), z = positive(b, 'Z');
      auto e = positive(b, 'E');
      if (!x || !y || !z || !only_words(b, "XYZE") || (b.has('E') && !e)) return std::nullopt;
      if (b.code == 201) return SetMaxAcceleration{*x, *y, *z, e};
      return SetJerk{*x, *y, *z, e};
    }
    case 204:
      if (auto p = positive(b, 'P'); p && only_words(b, "P")) return SetStartingAcceleration{*p};
      return std::nullopt;
    default:
      return std::nullopt;
  }
}

bool known_raw(const Block& b) {
  if (b.letter == 'G') {
    return b.code == 0 || b.code == 1 || b.code == 4 || b.code == 28 || b.code == 90 ||
           b.code == 91 || b.code == 92;
  }
  if (b.letter == 'M') {
    switch (b.code) {
      case 82: case 83: case 84: case 104: case 105: case 106: case 107: case 109:
      case 110: case 114: case 115: case 117: case 140: case 190: case 201: case 204:
      case 205: case 400:
        return true;
      default:
        return false;
    }
  }
  return false;
}

}  // namespace

ProgramParse parse_program(std::string_view text, const MachineProfile& profile) {
  ProgramParse out;
  std::vector<Entry> entries;

  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view raw = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    const auto trimmed = text::trim(raw);
    if (is_pause_directive(trimmed)) {
      entries.push_back({line_no, std::string(trimmed), std::nullopt});
      continue;
    }
    auto parsed = parse_block(trimmed);
    if (parsed.error) {
      out.diagnostics.push_back({line_no, *parsed.error + "; line skipped"});
      continue;
    }
    if (!parsed.block) continue;
    entries.push_back({line_no, std::string(trimmed), std::move(parsed.block)});
  }

  for (const auto& en : entries) out.lines.push_back(en.text);

  Interpreter interp;
  SegmentDeriver shadow(profile);
  std::vector<Segment> shadow_segments;
  std::vector<Diagnostic> shadow_diags;
  const int retract_f = feedrate_mm_min(profile.retract_speed);
  const double rl = profile.retract_length;
  bool pending_retract = false;
  bool primed = false;

  auto push = [&](Command c) {
    shadow.step(c, out.commands.size(), shadow_segments, shadow_diags);
    out.commands.push_back(std::move(c));
  };

  for (std::size_t k = 0; k < entries.size(); ++k) {
    const Entry& en = entries[k];
    if (!en.block) {
      push(Raw{en.text});
      continue;
    }
    const Block& b = *en.block;
    const ModalState modal = interp.modal();
    const bool absolute =
        modal.positioning == Mode::kAbsolute && modal.extruder == Mode::kAbsolute;
    auto motion = interp.apply(b);

    if (!motion) {
      pending_retract = primed = false;
      if (auto typed = lift_setting(b)) {
        push(std::move(*typed));
        continue;
      }
      if (b.letter == 'M' && (b.code == 104 || b.code == 109 || b.code == 140 ||
                              b.code == 190 || b.code == 201 || b.code == 204 || b.code == 205)) {
        out.diagnostics.push_back({en.line_no, "unsupported arguments; kept as raw line"});
      } else if (!known_raw(b)) {
        out.diagnostics.push_back({en.line_no, "unrecognized command; kept as raw line"});
      }
      push(Raw{en.text});
      continue;
    }

    const double feed = motion->feedrate.value_or(motion->rapid ? profile.default_travel_speed
                                                                : profile.default_print_speed);
    const double de = motion->end.e - motion->start.e;
    auto seg = make_segment(motion->start, motion->end, feed, en.line_no);

    // Resolved F of this line, for matching the serializer's retract lines.
    const bool retract_feed = interp.modal().last_feedrate == retract_f;
    auto next_motion = [&]() -> std::optional<Motion> {
      if (k + 1 >= entries.size() || !entries[k + 1].block || !is_move(*entries[k + 1].block)) {
        return std::nullopt;
      }
      return interp.preview(*entries[k + 1].block);
    };

    std::optional<Command> typed;
    bool consumed = false;
    if (absolute && !motion->has_xyz && rl > 0 && retract_feed) {
      const auto next = next_motion();
      if (de < 0 && !shadow.retracted() && std::abs(de + rl) <= kRetractTolerance && next &&
          next->rapid && next->has_xyz && !next->has_e) {
        consumed = pending_retract = true;
      } else if (de > 0 && shadow.retracted() && std::abs(de - rl) <= kRetractTolerance &&
                 next && !next->rapid && next->has_xyz && next->end.e > next->start.e) {
        consumed = primed = true;
        if (seg) seg->prime = true;
      }
    }
    if (!consumed && absolute && motion->has_xyz) {
      const Point3 target = motion->end.xyz();
      const std::optional<double> speed = motion->feedrate;
      if (de > 0 && (!shadow.retracted() || primed)) {
        typed = MoveExtrude{target, speed, de};
      } else if (de == 0 && pending_retract) {
        typed = MoveRetract{target, speed};
      } else if (de == 0 && motion->rapid) {
        typed = Travel{target, speed};
      }
    }
    if (!consumed) pending_retract = primed = false;

    if (seg) out.segments.push_back(*seg);
    if (consumed) continue;
    if (typed) {
      push(std::move(*typed));
    } else {
      push(Raw{en.text});
    }
  }
  return out;
}

}  // namespace fab::gcode
