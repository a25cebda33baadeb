#pragma once

// Marlin-dialect G-code: line framing, block parsing, a modal interpreter,
// command serialization, program parsing and firmware response parsing.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fab/command.hpp"
#include "fab/geometry.hpp"
#include "fab/profile.hpp"
#include "fab/toolpath.hpp"

namespace fab::gcode {

// ---------------------------------------------------------------------------
// Framing

struct GcodeLine {
  std::string text;
  std::optional<long> line_number;
  std::optional<int> checksum;
  friend bool operator==(const GcodeLine&, const GcodeLine&) = default;
};

// XOR of all bytes.
std::uint8_t checksum(std::string_view bytes);

// "N<n> <text>*<checksum>", checksum over "N<n> <text>". Throws
// ArgumentError for empty text or text containing '*' or line terminators.
std::string frame_line(std::string_view text, long line_number);

// Inverse of frame_line. Returns nullopt for anything that is not a well
// formed frame with a matching checksum.
std::optional<GcodeLine> unframe_line(std::string_view framed);

// ---------------------------------------------------------------------------
// Blocks

struct Word {
  char letter = 0;
  double value = 0.0;
};

// One parsed line: command letter + code and its argument words. `args`
// keeps the raw argument text for commands that take free text (M117).
struct Block {
  char letter = 0;
  int code = 0;
  std::vector<Word> words;
  std::string args;

  const Word* find(char letter) const;
  bool has(char letter) const { return find(letter) != nullptr; }
};

// Removes ';' and '(...)' comments, an "N<n>" prefix and a "*<cs>" suffix.
std::string strip_line(std::string_view line);

struct BlockParse {
  std::optional<Block> block;  // empty for blank lines or errors
  std::optional<std::string> error;
};

// Words of G0/G1/G28/G92/M104/M109/M140/M190/M201/M204/M205 must be
// numeric; other commands keep their arguments unparsed when they are not.
BlockParse parse_block(std::string_view line);

// ---------------------------------------------------------------------------
// Modal interpretation

enum class Mode { kAbsolute, kRelative };

struct ModalState {
  Mode positioning = Mode::kAbsolute;
  Mode extruder = Mode::kAbsolute;
  std::optional<int> last_feedrate;  // mm/min; F is modal
  friend bool operator==(const ModalState&, const ModalState&) = default;
};

// The machine's view after a motion block.
struct Motion {
  Position start;
  Position end;
  std::optional<double> feedrate;  // mm/s, from the modal F if any
  bool rapid = false;              // G0
  bool has_xyz = false;            // any of X/Y/Z present
  bool has_e = false;
};

// Tracks machine position and modal state across blocks. Handles G0/G1,
// G28, G90/G91, G92, M82/M83 and the feedrate word.
class Interpreter {
 public:
  // Returns the motion for G0/G1 blocks, nullopt otherwise.
  std::optional<Motion> apply(const Block& block);
  // What `apply` would do, without changing state.
  std::optional<Motion> preview(const Block& block) const;

  const Position& position() const { return position_; }
  void set_position(const Position& p) { position_ = p; }
  const ModalState& modal() const { return modal_; }

 private:
  Position position_;
  ModalState modal_;
  std::optional<double> feedrate_;  // exact mm/min as parsed
};

// ---------------------------------------------------------------------------
// Serialization

// Formats: XYZ with 3 decimals, E with 5, F integer mm/min, other values in
// shortest round-trip form. Locale independent.
std::string format_coord(double v);
std::string format_extrusion(double v);
int feedrate_mm_min(double speed_mm_s);

// Serializes commands against a machine profile. Motion commands are
// realized into segments exactly as the toolpath derives them (retract,
// travel, prime, extrude); each segment becomes one line. Every emitted line
// is fed back through an Interpreter so raw lines that change modes, the
// feedrate or the extruder position are honored by later commands.
class Writer {
 public:
  explicit Writer(MachineProfile profile);

  std::vector<std::string> write(const Command& cmd);

  const ModalState& modal() const { return interp_.modal(); }
  const Position& cursor() const { return deriver_.cursor(); }

 private:
  std::string motion_line(const Segment& seg);
  void track(const std::string& line);

  SegmentDeriver deriver_;
  Interpreter interp_;
  std::size_t index_ = 0;
  double e_offset_ = 0.0;  // logical minus machine extruder position
};

// Lines per command, in command order.
std::vector<std::vector<std::string>> serialize_commands(const MachineProfile& profile,
                                                         std::span<const Command> commands);
// Whole program, LF-terminated lines.
std::string serialize_program(const MachineProfile& profile, std::span<const Command> commands);
std::string serialize_program(const Toolpath& toolpath);

// ---------------------------------------------------------------------------
// Program parsing

struct ProgramParse {
  std::vector<Command> commands;
  std::vector<Segment> segments;  // `source` is the 1-based line number
  std::vector<Diagnostic> diagnostics;  // `index` is the 1-based line number
  // The input lines a host sends, trimmed: comment-only and malformed
  // lines are left out, pause directives are kept.
  std::vector<std::string> lines;
};

// Lifts the serializer's output back to typed commands (a retract line
// followed by a travel becomes MoveRetract, a prime before an extrusion is
// absorbed), keeps everything else as Raw, and derives segments from the
// machine's interpretation of every line. Lines in relative modes are kept
// as Raw. Malformed lines are reported and skipped.
ProgramParse parse_program(std::string_view text, const MachineProfile& profile);

// ---------------------------------------------------------------------------
// Firmware responses

struct Ok {
  friend bool operator==(const Ok&, const Ok&) = default;
};
struct Busy {
  friend bool operator==(const Busy&, const Busy&) = default;
};
struct ErrorReport {
  std::string message;
  friend bool operator==(const ErrorReport&, const ErrorReport&) = default;
};
struct Resend {
  long line = 0;
  friend bool operator==(const Resend&, const Resend&) = default;
};
struct PositionReport {
  double x = 0, y = 0, z = 0, e = 0;
  friend bool operator==(const PositionReport&, const PositionReport&) = default;
};
struct TempReport {
  double hotend_actual = 0, hotend_target = 0;
  std::optional<double> bed_actual, bed_target;
  bool ok = false;  // line began with "ok" and acknowledges a command
  friend bool operator==(const TempReport&, const TempReport&) = default;
};
struct Unknown {
  std::string raw;
  friend bool operator==(const Unknown&, const Unknown&) = default;
};

using ResponseEvent =
    std::variant<Ok, Busy, ErrorReport, Resend, PositionReport, TempReport, Unknown>;

// Total: every line maps to exactly one event.
ResponseEvent parse_response(std::string_view line);

// True for events that complete the in-flight command.
bool is_acknowledgment(const ResponseEvent& ev);

// Report lines as the virtual printer emits them:
//   "X:1.00 Y:2.00 Z:3.00 E:4.00 Count X:80 Y:160 Z:1200"
//   "ok T:210.00 /210.00 B:60.00 /60.00 @:0 B@:0"
std::string format_position_report(const Position& p, const Position& steps_per_mm);
std::string format_temp_report(double hotend, double hotend_target, double bed, double bed_target,
                               bool with_ok);

}  // namespace fab::gcode
