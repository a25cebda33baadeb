#pragma once

// Random program generators and independent oracles shared by the tests
// and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "fab/command.hpp"
#include "fab/gcode.hpp"
#include "fab/printer.hpp"
#include "fab/profile.hpp"

namespace fab::testing {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// Rounds to a grid the serializer writes exactly.
inline double grid(double v, double step) { return std::round(v / step) * step; }

inline Point3 random_point(std::mt19937_64& rng, const MachineProfile& p, double max_z = 20.0) {
  return {grid(uniform(rng, 0, p.max_x), 0.001), grid(uniform(rng, 0, p.max_y), 0.001),
          grid(uniform(rng, 0.1, std::min(max_z, p.max_z)), 0.001)};
}

// Valid, in-envelope commands of every kind. Targets lie on the 3-decimal
// grid and speeds on whole mm/min so a serialized program parses back to
// the same realized motion.
inline Command random_command(std::mt19937_64& rng, const MachineProfile& p) {
  auto speed = [&]() -> std::optional<double> {
    if (uniform_int(rng, 0, 2) == 0) return std::nullopt;
    return uniform_int(rng, 60, 6000) / 60.0;
  };
  switch (uniform_int(rng, 0, 15)) {
    case 0:
    case 1:
    case 2:
    case 3:
    case 4: {
      std::optional<double> e;
      if (uniform_int(rng, 0, 3) == 0) e = grid(uniform(rng, 0.01, 5.0), 0.00001);
      return MoveExtrude{random_point(rng, p), speed(), e};
    }
    case 5:
    case 6: return MoveRetract{random_point(rng, p), speed()};
    case 7:
    case 8: return Travel{random_point(rng, p), speed()};
    case 9: return SetNozzleTemp{static_cast<double>(uniform_int(rng, 0, 300)), uniform_int(rng, 0, 1) == 1};
    case 10: return SetBedTemp{grid(uniform(rng, 0, 120), 0.5), uniform_int(rng, 0, 1) == 1};
    case 11: return AutoHome{};
    case 12: {
      std::optional<double> e;
      if (uniform_int(rng, 0, 1)) e = uniform_int(rng, 100, 10000);
      return SetMaxAcceleration{static_cast<double>(uniform_int(rng, 100, 3000)),
                                static_cast<double>(uniform_int(rng, 100, 3000)),
                                static_cast<double>(uniform_int(rng, 10, 500)), e};
    }
    case 13: return SetStartingAcceleration{static_cast<double>(uniform_int(rng, 100, 3000))};
    case 14: {
      std::optional<double> e;
      if (uniform_int(rng, 0, 1)) e = grid(uniform(rng, 0.5, 10), 0.1);
      return SetJerk{grid(uniform(rng, 1, 20), 0.1), grid(uniform(rng, 1, 20), 0.1),
                     grid(uniform(rng, 0.1, 2), 0.1), e};
    }
    default: {
      static const char* kRaw[] = {"M106 S255", "M107", "M117 hello there", "M84", "G4 P10"};
      return Raw{kRaw[uniform_int(rng, 0, 4)]};
    }
  }
}

inline std::vector<Command> random_program(std::mt19937_64& rng, const MachineProfile& p,
                                           int min_len = 1, int max_len = 40) {
  std::vector<Command> out;
  const int n = uniform_int(rng, min_len, max_len);
  for (int i = 0; i < n; ++i) out.push_back(random_command(rng, p));
  return out;
}

// Only motion, on the bed, so a stream runs without heater waits.
inline std::vector<Command> random_motion_program(std::mt19937_64& rng, const MachineProfile& p,
                                                  int n) {
  std::vector<Command> out;
  for (int i = 0; i < n; ++i) {
    const Point3 t = random_point(rng, p, 5.0);
    const std::optional<double> speed = uniform_int(rng, 20, 150);
    switch (uniform_int(rng, 0, 3)) {
      case 0: out.push_back(Travel{t, speed}); break;
      default: out.push_back(MoveExtrude{t, speed, std::nullopt}); break;
    }
  }
  return out;
}

// Bead volume pi rn^2 L equals the filament volume pi rf^2 e.
inline double extrusion_by_volume(double rn, double rf, double length) {
  const double bead = std::numbers::pi * rn * rn * length;
  return bead / (std::numbers::pi * rf * rf);
}

// Integrates a move over `steps` distance cells. The speed at s is the
// lowest of the target, the launch curve from the junction speed and the
// braking curve into it; each cell takes 2 ds / (v_a + v_b), which is exact
// wherever the acceleration is constant across the cell.
inline double integrate_move(double length, double v_target, double accel, double v_junction,
                             int steps) {
  const double v0 = std::min(v_junction, v_target);
  auto speed = [&](double s) {
    const double up = std::sqrt(v0 * v0 + 2 * accel * s);
    const double down = std::sqrt(v0 * v0 + 2 * accel * std::max(0.0, length - s));
    return std::min({v_target, up, down});
  };
  const double ds = length / steps;
  double t = 0.0;
  double va = speed(0.0);
  for (int i = 1; i <= steps; ++i) {
    const double vb = speed(i == steps ? length : i * ds);
    t += 2 * ds / (va + vb);
    va = vb;
  }
  return t;
}

// Replays lines through a fresh interpreter.
inline Position commanded_after(const std::vector<std::string>& lines) {
  gcode::Interpreter in;
  for (const auto& l : lines) {
    auto b = gcode::parse_block(l);
    if (b.block) in.apply(*b.block);
  }
  return in.position();
}

inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    out.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return out;
}

inline std::string join(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + " | ";
  return out;
}

}  // namespace fab::testing
