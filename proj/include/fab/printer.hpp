#pragma once

// Virtual Marlin printer: planner buffer, trapezoid timing, heaters and a
// deposition trace, all on a simulated clock.

#include <atomic>
#include <cstdint>
#include <deque>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "fab/gcode.hpp"
#include "fab/geometry.hpp"
#include "fab/profile.hpp"
#include "fab/toolpath.hpp"

namespace fab::printer {

// Time to cover `length` starting and ending at `v_junction` (clamped to
// `v_target`), accelerating at `accel` up to `v_target`. Trapezoid when the
// cruise speed is reachable, triangle otherwise. Throws ArgumentError for
// non-positive speed or acceleration, or a negative length or junction speed.
double segment_duration(double length, double v_target, double accel, double v_junction);

// Velocity profile of one segment.
struct Trapezoid {
  double length = 0.0;
  double v_entry = 0.0;  // also the exit speed
  double v_peak = 0.0;
  double accel = 0.0;
  double t_accel = 0.0;
  double t_cruise = 0.0;

  double duration() const { return 2.0 * t_accel + t_cruise; }
  // Distance covered after `t` seconds, clamped to [0, length].
  double distance_at(double t) const;
};

Trapezoid plan_trapezoid(double length, double v_target, double accel, double v_junction);

enum class EnvelopeMode { kClamp, kFault };

std::string_view to_string(EnvelopeMode mode);
std::optional<EnvelopeMode> parse_envelope_mode(std::string_view s);

struct EmulatorConfig {
  MachineProfile profile = ender3();
  int buffer_depth = 16;
  Position max_accel{500, 500, 100, 5000};  // M201
  Position jerk{10, 10, 0.3, 5};            // M205
  double print_accel = 500;                 // M204 P
  double travel_accel = 500;                // M204 T
  double retract_accel = 500;               // M204 R
  Position steps_per_mm{80, 80, 400, 93};
  double tau_hotend = 8.0;
  double tau_bed = 30.0;
  double ambient = 25.0;
  double temp_window = 1.0;  // M109/M190 finish within this many degrees
  double temp_report_interval = 1.0;
  double busy_interval = 2.0;
  EnvelopeMode envelope_mode = EnvelopeMode::kClamp;
  // The n-th G0/G1 line received (1-based) answers "Error:checksum mismatch"
  // instead of executing.
  std::optional<long> fault_on_motion_line;
  // Received lines (1-based count) that arrive with one corrupted byte.
  std::set<long> corrupt_lines;
};

// Throws ArgumentError for a non-positive buffer depth or time constant.
void validate(const EmulatorConfig& config);

// One executed motion. `length` is the path length used for timing: the XYZ
// distance, or |delta_e| for extruder-only moves.
struct TraceRecord {
  double t_start = 0.0;
  double t_end = 0.0;
  Position start;
  Position end;
  double feedrate = 0.0;  // requested, mm/s
  double delta_e = 0.0;
  SegmentKind kind = SegmentKind::kTravel;
  double accel = 0.0;
  double junction_speed = 0.0;
  double length = 0.0;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

// One JSON object per line.
std::string trace_to_jsonl(const std::vector<TraceRecord>& trace);
std::vector<TraceRecord> trace_from_jsonl(std::string_view text);

struct OutputLine {
  double time = 0.0;
  std::string text;
};

struct Heater {
  double target = 0.0;
  double start_temp = 25.0;
  double start_time = 0.0;
  double tau = 1.0;
  double ambient = 25.0;

  double goal() const { return target > ambient ? target : ambient; }
  double temp_at(double t) const;
};

class Emulator {
 public:
  explicit Emulator(EmulatorConfig config = {});

  // Queues the boot banner.
  void boot();
  // Receives one line at the current time.
  void feed_line(std::string_view line);
  // Runs the clock forward to `t`, emitting whatever falls due.
  void advance_to(double t);
  // Next time the emulator produces output or unblocks by itself.
  std::optional<double> next_wakeup() const;
  std::vector<OutputLine> take_output();

  double now() const { return now_; }
  // True while a received line waits (full buffer, M400, M109, G4...).
  bool blocked() const { return wait_ != Wait::kNone; }
  bool has_pending_input() const { return !input_.empty(); }
  // When the last queued motion finishes.
  double motion_end() const { return last_end_; }

  const EmulatorConfig& config() const { return config_; }
  const std::vector<TraceRecord>& trace() const { return trace_; }
  // Last commanded position, as M114 reports it.
  const Position& commanded() const { return interp_.position(); }
  // Where the head physically is at the current time.
  Position physical() const;
  const Heater& hotend() const { return hotend_; }
  const Heater& bed() const { return bed_; }
  std::size_t pending_moves() const;

 private:
  enum class Wait { kNone, kBuffer, kDrain, kHome, kDwell, kHeat };

  void process_input();
  void handle(std::string line);
  void execute(const gcode::Block& block, const std::string& text);
  void motion(const gcode::Block& block);
  bool queue_motion(const gcode::Motion& m);
  void block_on(Wait wait, double until, double keepalive_interval);
  void finish_wait();
  void emit(std::string text);
  void ok() { emit("ok"); }
  std::string temp_line(bool with_ok) const;

  EmulatorConfig config_;
  double now_ = 0.0;
  double last_end_ = 0.0;
  gcode::Interpreter interp_;
  std::vector<TraceRecord> trace_;
  std::deque<std::string> input_;
  std::vector<OutputLine> output_;
  Heater hotend_;
  Heater bed_;

  Wait wait_ = Wait::kNone;
  double wait_until_ = 0.0;
  double next_keepalive_ = 0.0;
  double keepalive_interval_ = 0.0;
  std::optional<gcode::Motion> blocked_motion_;
  std::optional<gcode::Block> blocked_block_;
  Position rest_;  // physical position when no recorded move applies
  double rest_time_ = 0.0;

  long last_line_ = 0;
  long received_ = 0;
  long motion_lines_ = 0;
};

struct RunResult {
  std::vector<TraceRecord> trace;
  double total_duration = 0.0;  // clock when every line is done and motion stopped
  Position final_position;
  std::vector<std::string> responses;
  std::vector<std::string> errors;
};

// Feeds every line as soon as the emulator accepts it.
RunResult run_program(const EmulatorConfig& config, std::string_view gcode_text);

// Serves an emulator on a pseudo-terminal with the simulated clock tied to
// wall time. Connect a serial client to `device_path()`.
class PtyServer {
 public:
  explicit PtyServer(EmulatorConfig config);
  ~PtyServer();
  PtyServer(const PtyServer&) = delete;
  PtyServer& operator=(const PtyServer&) = delete;

  void start();
  void stop();
  const std::string& device_path() const { return path_; }

 private:
  void run();

  EmulatorConfig config_;
  int master_ = -1;
  int slave_ = -1;
  std::string path_;
  std::thread thread_;
  std::atomic<bool> running_{false};
};

}  // namespace fab::printer
