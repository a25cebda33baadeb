#include <algorithm>
#include <cmath>
#include <limits>

#include "fab/errors.hpp"
#include "fab/printer.hpp"
#include "fab/text.hpp"

namespace fab::printer {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Position lerp(const Position& a, const Position& b, double s) {
  return {a.x + (b.x - a.x) * s, a.y + (b.y - a.y) * s, a.z + (b.z - a.z) * s,
          a.e + (b.e - a.e) * s};
}

std::optional<double> word(const gcode::Block& b, char l) {
  if (const auto* w = b.find(l)) return w->value;
  return std::nullopt;
}

}  // namespace

Emulator::Emulator(EmulatorConfig config) : config_(std::move(config)) {
  validate(config_);
  hotend_.tau = config_.tau_hotend;
  bed_.tau = config_.tau_bed;
  hotend_.ambient = bed_.ambient = config_.ambient;
  hotend_.start_temp = bed_.start_temp = config_.ambient;
}

void Emulator::boot() {
  emit("start");
  emit("echo:Marlin virtual printer");
  emit("echo: Machine: " + config_.profile.name);
  emit("echo:SD card ok");
}

void Emulator::emit(std::string text) { output_.push_back({now_, std::move(text)}); }

std::vector<OutputLine> Emulator::take_output() {
  std::vector<OutputLine> out;
  out.swap(output_);
  return out;
}

void Emulator::feed_line(std::string_view line) {
  input_.emplace_back(line);
  process_input();
}

void Emulator::process_input() {
  while (!blocked() && !input_.empty()) {
    std::string line = std::move(input_.front());
    input_.pop_front();
    handle(std::move(line));
  }
}

std::optional<double> Emulator::next_wakeup() const {
  if (!blocked()) return std::nullopt;
  return std::min(wait_until_, next_keepalive_);
}

void Emulator::advance_to(double t) {
  for (;;) {
    process_input();
    if (!blocked()) break;
    const double ev = std::min(wait_until_, next_keepalive_);
    if (ev > t) break;
    now_ = std::max(now_, ev);
    if (wait_until_ <= next_keepalive_) {
      finish_wait();
    } else {
      emit(wait_ == Wait::kHeat ? temp_line(false) : "echo:busy: processing");
      next_keepalive_ += keepalive_interval_;
    }
  }
  now_ = std::max(now_, t);
}

void Emulator::block_on(Wait wait, double until, double keepalive_interval) {
  wait_ = wait;
  wait_until_ = until;
  keepalive_interval_ = keepalive_interval;
  next_keepalive_ = now_ + keepalive_interval;
}

void Emulator::finish_wait() {
  const Wait w = wait_;
  wait_ = Wait::kNone;
  if (w == Wait::kBuffer && blocked_motion_) {
    queue_motion(*blocked_motion_);
    blocked_motion_.reset();
  } else if (w == Wait::kHome && blocked_block_) {
    interp_.apply(*blocked_block_);
    blocked_block_.reset();
    rest_ = interp_.position();
    rest_time_ = now_;
  }
  ok();
}

std::size_t Emulator::pending_moves() const {
  std::size_t n = 0;
  for (auto it = trace_.rbegin(); it != trace_.rend() && it->t_end > now_; ++it) ++n;
  return n;
}

Position Emulator::physical() const {
  for (auto it = trace_.rbegin(); it != trace_.rend(); ++it) {
    if (it->t_start > now_) continue;
    if (it->t_start < rest_time_) break;
    if (now_ >= it->t_end) return it->end;
    const auto p = plan_trapezoid(it->length, it->feedrate, it->accel, it->junction_speed);
    const double s = it->length > 0 ? p.distance_at(now_ - it->t_start) / it->length : 1.0;
    return lerp(it->start, it->end, s);
  }
  return rest_;
}

std::string Emulator::temp_line(bool with_ok) const {
  return gcode::format_temp_report(hotend_.temp_at(now_), hotend_.target, bed_.temp_at(now_),
                                   bed_.target, with_ok);
}

void Emulator::handle(std::string line) {
  ++received_;
  if (config_.corrupt_lines.count(received_) && line.size() > 1) {
    line[line.size() / 2] ^= 0x01;
  }
  std::string text(fab::text::trim(line));
  const bool numbered = text.size() > 1 && text[0] == 'N' &&
                        std::isdigit(static_cast<unsigned char>(text[1]));
  if (numbered || text.find('*') != std::string::npos) {
    const auto framed = gcode::unframe_line(text);
    if (!framed) {
      emit("Error:checksum mismatch, Last Line: " + std::to_string(last_line_));
      emit("Resend: " + std::to_string(last_line_ + 1));
      ok();
      return;
    }
    const auto parsed = gcode::parse_block(framed->text);
    const bool is_m110 = parsed.block && parsed.block->letter == 'M' && parsed.block->code == 110;
    if (!is_m110 && *framed->line_number != last_line_ + 1) {
      emit("Error:Line Number is not Last Line Number+1, Last Line: " +
           std::to_string(last_line_));
      emit("Resend: " + std::to_string(last_line_ + 1));
      ok();
      return;
    }
    last_line_ = *framed->line_number;
    text = framed->text;
  }

  auto parsed = gcode::parse_block(text);
  if (parsed.error) {
    emit("Error:" + *parsed.error);
    return;
  }
  if (!parsed.block) return;
  execute(*parsed.block, text);
}

void Emulator::execute(const gcode::Block& b, const std::string& text) {
  const char l = b.letter;
  const int c = b.code;
  if (l == 'G' && (c == 0 || c == 1)) {
    motion(b);
    return;
  }
  if (l == 'G' && c == 28) {
    if (last_end_ > now_) {
      blocked_block_ = b;
      block_on(Wait::kHome, last_end_, config_.busy_interval);
      return;
    }
    interp_.apply(b);
    rest_ = interp_.position();
    rest_time_ = now_;
    ok();
    return;
  }
  if (l == 'G' && c == 4) {
    const double dwell = word(b, 'S').value_or(0.0) + word(b, 'P').value_or(0.0) / 1000.0;
    const double until = std::max(now_, last_end_) + std::max(0.0, dwell);
    if (until > now_) {
      block_on(Wait::kDwell, until, config_.busy_interval);
    } else {
      ok();
    }
    return;
  }
  if (l == 'G' && (c == 90 || c == 91 || c == 92)) {
    interp_.apply(b);
    if (c == 92 && last_end_ <= now_) {
      rest_ = interp_.position();
      rest_time_ = now_;
    }
    ok();
    return;
  }
  if (l != 'M') {
    emit("echo:Unknown command: \"" + text + "\"");
    ok();
    return;
  }
  switch (c) {
    case 82:
    case 83:
      interp_.apply(b);
      ok();
      return;
    case 104:
    case 109:
    case 140:
    case 190: {
      Heater& h = (c == 104 || c == 109) ? hotend_ : bed_;
      if (auto s = word(b, 'S'); s && *s >= 0) {
        h.start_temp = h.temp_at(now_);
        h.start_time = now_;
        h.target = *s;
      }
      const bool wait = c == 109 || c == 190;
      const double gap = std::abs(h.temp_at(now_) - h.goal());
      if (wait && h.target > h.ambient && gap > config_.temp_window) {
        const double until = now_ + h.tau * std::log(gap / config_.temp_window);
        block_on(Wait::kHeat, until, config_.temp_report_interval);
        return;
      }
      ok();
      return;
    }
    case 105:
      emit(temp_line(true));
      return;
    case 114:
      emit(gcode::format_position_report(interp_.position(), config_.steps_per_mm));
      ok();
      return;
    case 110:
      if (auto n = word(b, 'N')) last_line_ = static_cast<long>(*n);
      ok();
      return;
    case 115:
      emit("FIRMWARE_NAME:Marlin virtual-printer PROTOCOL_VERSION:1.0 MACHINE_TYPE:" +
           config_.profile.name + " EXTRUDER_COUNT:1");
      ok();
      return;
    case 201: {
      auto set = [&](char a, double& v) {
        if (auto w = word(b, a); w && *w > 0) v = *w;
      };
      set('X', config_.max_accel.x);
      set('Y', config_.max_accel.y);
      set('Z', config_.max_accel.z);
      set('E', config_.max_accel.e);
      ok();
      return;
    }
    case 204: {
      if (auto w = word(b, 'S'); w && *w > 0) config_.print_accel = config_.travel_accel = *w;
      if (auto w = word(b, 'P'); w && *w > 0) config_.print_accel = *w;
      if (auto w = word(b, 'T'); w && *w > 0) config_.travel_accel = *w;
      if (auto w = word(b, 'R'); w && *w > 0) config_.retract_accel = *w;
      ok();
      return;
    }
    case 205: {
      auto set = [&](char a, double& v) {
        if (auto w = word(b, a); w && *w > 0) v = *w;
      };
      set('X', config_.jerk.x);
      set('Y', config_.jerk.y);
      set('Z', config_.jerk.z);
      set('E', config_.jerk.e);
      ok();
      return;
    }
    case 400:
      if (last_end_ > now_) {
        block_on(Wait::kDrain, last_end_, config_.busy_interval);
      } else {
        ok();
      }
      return;
    case 18:
    case 84:
    case 106:
    case 107:
    case 117:
      ok();
      return;
    default:
      emit("echo:Unknown command: \"" + text + "\"");
      ok();
      return;
  }
}

void Emulator::motion(const gcode::Block& b) {
  ++motion_lines_;
  if (config_.fault_on_motion_line && *config_.fault_on_motion_line == motion_lines_) {
    emit("Error:checksum mismatch, Last Line: " + std::to_string(last_line_));
    return;
  }
  auto m = *interp_.preview(b);
  const auto& p = config_.profile;
  const bool out = m.end.x < 0 || m.end.x > p.max_x || m.end.y < 0 || m.end.y > p.max_y ||
                   m.end.z < 0 || m.end.z > p.max_z;
  if (out && config_.envelope_mode == EnvelopeMode::kFault) {
    emit("Error:Move out of range: X" + fab::text::format_fixed(m.end.x, 3) + " Y" +
         fab::text::format_fixed(m.end.y, 3) + " Z" + fab::text::format_fixed(m.end.z, 3));
    return;
  }
  interp_.apply(b);
  if (out) {
    m.end.x = std::clamp(m.end.x, 0.0, p.max_x);
    m.end.y = std::clamp(m.end.y, 0.0, p.max_y);
    m.end.z = std::clamp(m.end.z, 0.0, p.max_z);
    interp_.set_position(m.end);
  }
  if (pending_moves() >= static_cast<std::size_t>(config_.buffer_depth)) {
    double oldest = kInf;
    for (auto it = trace_.rbegin(); it != trace_.rend() && it->t_end > now_; ++it) {
      oldest = it->t_end;
    }
    blocked_motion_ = m;
    block_on(Wait::kBuffer, oldest, config_.busy_interval);
    return;
  }
  queue_motion(m);
  ok();
}

bool Emulator::queue_motion(const gcode::Motion& m) {
  const auto& p = config_.profile;
  const double feed =
      m.feedrate.value_or(m.rapid ? p.default_travel_speed : p.default_print_speed);
  const auto seg = make_segment(m.start, m.end, feed, 0);
  if (!seg) return false;

  const double d[4] = {std::abs(m.end.x - m.start.x), std::abs(m.end.y - m.start.y),
                       std::abs(m.end.z - m.start.z), std::abs(seg->delta_e)};
  const double xyz = seg->length();
  const double length = xyz > 0 ? xyz : d[3];
  double accel = xyz == 0 ? config_.retract_accel
                          : (seg->delta_e == 0 ? config_.travel_accel : config_.print_accel);
  double jerk = kInf;
  const double max_accel[4] = {config_.max_accel.x, config_.max_accel.y, config_.max_accel.z,
                               config_.max_accel.e};
  const double max_jerk[4] = {config_.jerk.x, config_.jerk.y, config_.jerk.z, config_.jerk.e};
  for (int i = 0; i < 4; ++i) {
    if (d[i] <= 0) continue;
    accel = std::min(accel, max_accel[i] * length / d[i]);
    jerk = std::min(jerk, max_jerk[i] * length / d[i]);
  }

  TraceRecord r;
  r.start = m.start;
  r.end = m.end;
  r.feedrate = feed;
  r.delta_e = seg->delta_e;
  r.kind = seg->kind;
  r.accel = accel;
  r.junction_speed = std::min(feed, jerk / 2.0);
  r.length = length;
  r.t_start = std::max(now_, last_end_);
  r.t_end = r.t_start + segment_duration(length, feed, accel, r.junction_speed);
  last_end_ = r.t_end;
  trace_.push_back(r);
  return true;
}

RunResult run_program(const EmulatorConfig& config, std::string_view gcode_text) {
  Emulator emu(config);
  RunResult result;
  auto collect = [&] {
    for (auto& o : emu.take_output()) {
      if (o.text.rfind("Error:", 0) == 0) result.errors.push_back(o.text);
      result.responses.push_back(std::move(o.text));
    }
  };
  while (!gcode_text.empty()) {
    const auto nl = gcode_text.find('\n');
    emu.feed_line(gcode_text.substr(0, nl));
    gcode_text = nl == std::string_view::npos ? std::string_view{} : gcode_text.substr(nl + 1);
    while (emu.blocked()) emu.advance_to(*emu.next_wakeup());
    collect();
  }
  emu.advance_to(std::max(emu.now(), emu.motion_end()));
  collect();
  result.trace = emu.trace();
  result.total_duration = emu.now();
  result.final_position = emu.commanded();
  return result;
}

}  // namespace fab::printer
