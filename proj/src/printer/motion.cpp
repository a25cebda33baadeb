#include <algorithm>
#include <cmath>

#include "fab/errors.hpp"
#include "fab/printer.hpp"

namespace fab::printer {

Trapezoid plan_trapezoid(double length, double v_target, double accel, double v_junction) {
  if (!(v_target > 0) || !std::isfinite(v_target)) {
    throw ArgumentError("segmentDuration: target speed must be > 0");
  }
  if (!(accel > 0) || !std::isfinite(accel)) {
    throw ArgumentError("segmentDuration: acceleration must be > 0");
  }
  if (!(length >= 0) || !std::isfinite(length)) {
    throw ArgumentError("segmentDuration: length must be finite and >= 0");
  }
  if (!(v_junction >= 0) || !std::isfinite(v_junction)) {
    throw ArgumentError("segmentDuration: junction speed must be finite and >= 0");
  }
  Trapezoid p;
  p.length = length;
  p.accel = accel;
  p.v_entry = std::min(v_junction, v_target);
  if (length == 0) {
    p.v_peak = p.v_entry;
    return p;
  }
  const double ramp = (v_target * v_target - p.v_entry * p.v_entry) / accel;
  if (length >= ramp) {
    p.v_peak = v_target;
    p.t_accel = (v_target - p.v_entry) / accel;
    p.t_cruise = (length - ramp) / v_target;
  } else {
    p.v_peak = std::sqrt(accel * length + p.v_entry * p.v_entry);
    p.t_accel = (p.v_peak - p.v_entry) / accel;
  }
  return p;
}

double segment_duration(double length, double v_target, double accel, double v_junction) {
  return plan_trapezoid(length, v_target, accel, v_junction).duration();
}

double Trapezoid::distance_at(double t) const {
  if (t <= 0) return 0.0;
  if (t >= duration()) return length;
  const double d_accel = v_entry * t_accel + 0.5 * accel * t_accel * t_accel;
  if (t <= t_accel) return v_entry * t + 0.5 * accel * t * t;
  if (t <= t_accel + t_cruise) return d_accel + v_peak * (t - t_accel);
  const double td = t - t_accel - t_cruise;
  const double d = d_accel + v_peak * t_cruise + v_peak * td - 0.5 * accel * td * td;
  return std::min(d, length);
}

std::string_view to_string(EnvelopeMode mode) {
  return mode == EnvelopeMode::kClamp ? "clamp" : "fault";
}

std::optional<EnvelopeMode> parse_envelope_mode(std::string_view s) {
  if (s == "clamp") return EnvelopeMode::kClamp;
  if (s == "fault") return EnvelopeMode::kFault;
  return std::nullopt;
}

void validate(const EmulatorConfig& c) {
  validate(c.profile);
  if (c.buffer_depth < 1) throw ArgumentError("emulator: buffer depth must be >= 1");
  if (!(c.tau_hotend > 0) || !(c.tau_bed > 0)) {
    throw ArgumentError("emulator: heating time constants must be > 0");
  }
  if (!(c.temp_window > 0)) throw ArgumentError("emulator: temperature window must be > 0");
  if (!(c.temp_report_interval > 0) || !(c.busy_interval > 0)) {
    throw ArgumentError("emulator: report intervals must be > 0");
  }
  for (double v : {c.max_accel.x, c.max_accel.y, c.max_accel.z, c.max_accel.e, c.jerk.x, c.jerk.y,
                   c.jerk.z, c.jerk.e, c.print_accel, c.travel_accel, c.retract_accel}) {
    if (!(v > 0) || !std::isfinite(v)) {
      throw ArgumentError("emulator: accelerations and jerks must be > 0");
    }
  }
}

double Heater::temp_at(double t) const {
  const double dt = std::max(0.0, t - start_time);
  return goal() + (start_temp - goal()) * std::exp(-dt / tau);
}

}  // namespace fab::printer
