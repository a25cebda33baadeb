#include "fab/recipes.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "fab/errors.hpp"
#include "fab/text.hpp"

namespace fab::recipes {

namespace {

constexpr double kTwoPi = 2 * std::numbers::pi;
// Absorbs floating error in sample counts such as 2 pi / (2 pi / 200).
constexpr double kCountSlack = 1e-9;

void require(bool ok, const char* message) {
  if (!ok) throw ArgumentError(message);
}

bool finite_all(std::initializer_list<double> vs) {
  return std::all_of(vs.begin(), vs.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

std::size_t lissajous_samples(const LissajousParams& p) {
  return static_cast<std::size_t>(std::floor(kTwoPi / p.step + kCountSlack)) + 1;
}

Point3 lissajous_point(const MachineProfile& profile, const LissajousParams& p, std::size_t i) {
  const double t = static_cast<double>(i) * p.step;
  return {profile.max_x / 2 + p.A * std::sin(p.a * t + p.delta),
          profile.max_y / 2 + p.B * std::sin(p.b * t), p.z};
}

Toolpath lissajous(const MachineProfile& profile, const LissajousParams& p) {
  require(finite_all({p.A, p.B, p.delta, p.step, p.z}), "lissajous: parameters must be finite");
  require(p.step > 0, "lissajous: step must be > 0");
  require(p.A >= 0 && p.B >= 0, "lissajous: amplitudes must be >= 0");
  require(p.z > 0, "lissajous: z must be > 0");
  require(lissajous_samples(p) <= 1000000, "lissajous: step too small");
  Toolpath tp(profile);
  const Point3 first = lissajous_point(profile, p, 0);
  tp.move(first.x, first.y, first.z);
  for (std::size_t i = 0, n = lissajous_samples(p); i < n; ++i) {
    const Point3 q = lissajous_point(profile, p, i);
    tp.move_extrude(q.x, q.y, q.z);
  }
  return tp;
}

std::size_t velocity_cube_layers(const VelocityCubeParams& p) {
  return static_cast<std::size_t>(std::llround(p.cube_len / p.layer_height));
}

int velocity_cube_region(const VelocityCubeParams& p, double z) {
  const auto band = static_cast<long long>(std::floor(z / p.checker_len + kCountSlack));
  return static_cast<int>(band % 2);
}

Toolpath velocity_cube(const MachineProfile& profile, const VelocityCubeParams& p) {
  require(finite_all({p.speed_a, p.speed_b, p.cube_len, p.checker_len, p.layer_height}),
          "velocityCube: parameters must be finite");
  require(p.layer_height > 0, "velocityCube: layer height must be > 0");
  require(p.speed_a > 0 && p.speed_b > 0, "velocityCube: speeds must be > 0");
  require(p.checker_len > 0 && p.checker_len <= p.cube_len,
          "velocityCube: checker length must be in (0, cube length]");
  require(velocity_cube_layers(p) <= 100000, "velocityCube: too many layers");
  const Point3 o = p.origin.value_or(
      Point3{profile.max_x / 2 - p.cube_len / 2, profile.max_y / 2 - p.cube_len / 2, 0.0});
  const auto pieces = static_cast<std::size_t>(std::ceil(p.cube_len / p.checker_len - kCountSlack));

  Toolpath tp(profile);
  for (std::size_t i = 1, n = velocity_cube_layers(p); i <= n; ++i) {
    const double z = o.z + static_cast<double>(i) * p.layer_height;
    tp.move(o.x, o.y, z);
    bool region = velocity_cube_region(p, z - o.z) != 0;
    for (std::size_t k = 1; k <= pieces; ++k) {
      const double x = std::min(o.x + static_cast<double>(k) * p.checker_len, o.x + p.cube_len);
      tp.move_extrude(x, o.y, z, region ? p.speed_a : p.speed_b);
      region = !region;
    }
    tp.move_extrude(o.x + p.cube_len, o.y + p.cube_len, z);
    tp.move_extrude(o.x, o.y + p.cube_len, z);
    tp.move_extrude(o.x, o.y, z);
  }
  return tp;
}

Toolpath dot_bridge(const MachineProfile& profile, const DotBridgeParams& p) {
  require(finite_all({p.x_start, p.x_end, p.y, p.z, p.dot_height, p.slow_speed, p.fast_speed,
                      p.e_amount}),
          "dotBridge: parameters must be finite");
  require(p.x_end > p.x_start, "dotBridge: xEnd must be greater than xStart");
  require(p.dot_height > 0, "dotBridge: dot height must be > 0");
  require(p.slow_speed > 0 && p.fast_speed > p.slow_speed,
          "dotBridge: speeds must satisfy 0 < slowSpeed < fastSpeed");
  require(p.e_amount > 0, "dotBridge: eAmount must be > 0");
  Toolpath tp(profile);
  tp.move(p.x_start, p.y, p.z);
  tp.move_extrude(p.x_start, p.y, p.z + p.dot_height, p.slow_speed, p.e_amount);
  tp.move_retract(p.x_end, p.y, p.z);
  tp.move_extrude(p.x_end, p.y, p.z + p.dot_height, p.slow_speed, p.e_amount);
  tp.move_extrude(p.x_start, p.y, p.z + p.dot_height, p.fast_speed);
  return tp;
}

double wave_z(const WaveParams& p, double x) {
  const double theta = (x - p.x_start) / (p.x_end - p.x_start) * kTwoPi;
  return p.A * std::cos(theta + std::numbers::pi) + p.A;
}

Toolpath wave(const MachineProfile& profile, const WaveParams& p) {
  require(finite_all({p.A, p.x_start, p.x_end, p.x_step, p.y, p.ax, p.ay, p.az}),
          "wave: parameters must be finite");
  require(p.x_step > 0, "wave: xStep must be > 0");
  require(p.A >= 0, "wave: amplitude must be >= 0");
  require(p.x_end > p.x_start, "wave: xEnd must be greater than xStart");
  const auto n = static_cast<std::size_t>(std::floor((p.x_end - p.x_start) / p.x_step + kCountSlack));
  require(n <= 1000000, "wave: xStep too small");
  Toolpath tp(profile);
  tp.set_starting_acceleration(std::max({p.ax, p.ay, p.az}));
  tp.set_max_acceleration(p.ax, p.ay, p.az);
  tp.move(p.x_start, p.y, wave_z(p, p.x_start));
  for (std::size_t i = 0; i <= n; ++i) {
    const double x = p.x_start + static_cast<double>(i) * p.x_step;
    tp.move_extrude(x, p.y, wave_z(p, x));
  }
  return tp;
}

Toolpath overlay_handle(const MachineProfile& profile, const OverlayParams& p) {
  require(finite_all({p.p1.x, p.p1.y, p.p1.z, p.p2.x, p.p2.y, p.p2.z, p.clearance, p.width,
                      p.layer_height}),
          "overlayHandle: parameters must be finite");
  require(p.p1.xyz() != p.p2.xyz(), "overlayHandle: probes must differ");
  const double dx = p.p2.x - p.p1.x;
  const double dy = p.p2.y - p.p1.y;
  const double span = std::hypot(dx, dy);
  require(span > 0, "overlayHandle: probes must differ in x or y");
  auto inside = [&](const Position& q) {
    return q.x >= 0 && q.x <= profile.max_x && q.y >= 0 && q.y <= profile.max_y && q.z >= 0 &&
           q.z <= profile.max_z;
  };
  require(inside(p.p1) && inside(p.p2), "overlayHandle: probes must lie within the envelope");
  require(p.clearance >= 0, "overlayHandle: clearance must be >= 0");
  require(p.width > 0, "overlayHandle: width must be > 0");
  require(p.layers >= 1 && p.layers <= 10000, "overlayHandle: layers must be in [1, 10000]");
  require(p.layer_height > 0, "overlayHandle: layer height must be > 0");
  require(p.cap_segments >= 2 && p.cap_segments <= 1000,
          "overlayHandle: cap segments must be in [2, 1000]");

  const double ux = dx / span, uy = dy / span;
  const double nx = -uy, ny = ux;
  const double r = p.width / 2;
  // Height follows the spine: project onto p1->p2 and clamp to its ends.
  auto z_at = [&](double x, double y, double lift) {
    const double s = std::clamp(((x - p.p1.x) * ux + (y - p.p1.y) * uy) / span, 0.0, 1.0);
    const double z = std::clamp(std::lerp(p.p1.z, p.p2.z, s), std::min(p.p1.z, p.p2.z),
                                std::max(p.p1.z, p.p2.z));
    return z + lift;
  };

  Toolpath tp(profile);
  const double safe = std::min(std::max(p.p1.z, p.p2.z) + p.clearance, profile.max_z);
  tp.move(p.p1.x, p.p1.y, safe);
  tp.move(p.p1.x, p.p1.y, p.p1.z);
  for (int k = 0; k < p.layers; ++k) {
    const double lift = k * p.layer_height;
    if (k > 0) tp.move_retract(p.p1.x, p.p1.y, p.p1.z + lift);
    tp.move_extrude(p.p2.x, p.p2.y, p.p2.z + lift);

    auto to = [&](double x, double y) { tp.move_extrude(x, y, z_at(x, y, lift)); };
    to(p.p2.x + nx * r, p.p2.y + ny * r);
    to(p.p1.x + nx * r, p.p1.y + ny * r);
    // Cap around p1 from +n to -n, bulging away from p2.
    for (int i = 1; i <= p.cap_segments; ++i) {
      const double a = std::numbers::pi * i / p.cap_segments;
      const double cx = nx * std::cos(a) - ux * std::sin(a);
      const double cy = ny * std::cos(a) - uy * std::sin(a);
      to(p.p1.x + cx * r, p.p1.y + cy * r);
    }
    to(p.p2.x - nx * r, p.p2.y - ny * r);
    // Cap around p2 from -n back to +n, bulging away from p1.
    for (int i = 1; i <= p.cap_segments; ++i) {
      const double a = std::numbers::pi * i / p.cap_segments;
      const double cx = -nx * std::cos(a) + ux * std::sin(a);
      const double cy = -ny * std::cos(a) + uy * std::sin(a);
      to(p.p2.x + cx * r, p.p2.y + cy * r);
    }
  }
  const Position end = tp.cursor();
  tp.move(end.x, end.y, std::max(safe, end.z));
  return tp;
}

std::vector<Point3> bed_level_stops(const MachineProfile& profile, const BedLevelParams& p) {
  require(finite_all({p.inset, p.z, p.hop}), "bedLevelTour: parameters must be finite");
  require(p.inset >= 0 && p.inset <= profile.max_x / 2 && p.inset <= profile.max_y / 2,
          "bedLevelTour: inset must be in [0, half the bed]");
  require(p.z >= 0 && p.hop >= p.z, "bedLevelTour: need 0 <= z <= hop");
  const double x0 = p.inset, x1 = profile.max_x - p.inset;
  const double y0 = p.inset, y1 = profile.max_y - p.inset;
  return {{x0, y0, p.z},
          {x1, y0, p.z},
          {x1, y1, p.z},
          {x0, y1, p.z},
          {profile.max_x / 2, profile.max_y / 2, p.z}};
}

Toolpath bed_level_tour(const MachineProfile& profile, const BedLevelParams& p) {
  const auto stops = bed_level_stops(profile, p);
  Toolpath tp(profile);
  tp.auto_home();
  for (std::size_t i = 0; i < stops.size(); ++i) {
    const auto& s = stops[i];
    const Position at = tp.cursor();
    tp.move(at.x, at.y, p.hop);
    tp.move(s.x, s.y, p.hop);
    tp.move(s.x, s.y, s.z);
    tp.raw(std::string(kPauseDirective) + " level point " + std::to_string(i + 1) + " X" +
           text::format_shortest(s.x) + " Y" + text::format_shortest(s.y));
  }
  const Position at = tp.cursor();
  tp.move(at.x, at.y, p.hop);
  return tp;
}

Toolpath spiral_vase(const MachineProfile& profile, const SpiralVaseParams& p) {
  require(finite_all({p.radius, p.height, p.layer_height, p.speed}),
          "spiralVase: parameters must be finite");
  require(p.radius > 0 && p.height > 0 && p.layer_height > 0 && p.speed > 0,
          "spiralVase: dimensions and speed must be > 0");
  require(p.segments_per_turn >= 3, "spiralVase: need at least 3 segments per turn");
  const double turns = p.height / p.layer_height;
  const auto n = static_cast<std::size_t>(std::llround(turns * p.segments_per_turn));
  require(n <= 1000000, "spiralVase: too many segments");
  const double cx = profile.max_x / 2, cy = profile.max_y / 2;
  Toolpath tp(profile);
  tp.move(cx + p.radius, cy, p.layer_height);
  for (std::size_t i = 1; i <= n; ++i) {
    const double a = kTwoPi * static_cast<double>(i) / p.segments_per_turn;
    const double z = p.layer_height + p.height * static_cast<double>(i) / static_cast<double>(n);
    tp.move_extrude(cx + p.radius * std::cos(a), cy + p.radius * std::sin(a), z, p.speed);
  }
  return tp;
}

// ---------------------------------------------------------------------------

namespace {

struct Binder {
  const ParamMap& params;
  std::string recipe;
  std::vector<std::string> used;

  std::optional<std::string_view> get(const std::string& key) {
    used.push_back(key);
    auto it = params.find(key);
    if (it == params.end()) return std::nullopt;
    return it->second;
  }
  void num(const std::string& key, double& v) {
    if (auto s = get(key)) {
      auto d = text::parse_double(*s);
      if (!d) throw ArgumentError(recipe + ": parameter " + key + " is not a number: " + std::string(*s));
      v = *d;
    }
  }
  void integer(const std::string& key, int& v) {
    if (auto s = get(key)) {
      auto d = text::parse_long(*s);
      if (!d || *d < -1000000000 || *d > 1000000000) {
        throw ArgumentError(recipe + ": parameter " + key + " is not an integer: " + std::string(*s));
      }
      v = static_cast<int>(*d);
    }
  }
  void finish() {
    for (const auto& [k, v] : params) {
      if (std::find(used.begin(), used.end(), k) == used.end()) {
        throw ArgumentError(recipe + ": unknown parameter '" + k + "'");
      }
    }
  }
};

std::string fmt(double v) { return text::format_shortest(v); }

}  // namespace

const std::vector<RecipeInfo>& recipe_catalog() {
  static const std::vector<RecipeInfo> catalog = [] {
    const LissajousParams l;
    const VelocityCubeParams v;
    const DotBridgeParams d;
    const WaveParams w;
    const OverlayParams o;
    const BedLevelParams b;
    const SpiralVaseParams s;
    return std::vector<RecipeInfo>{
        {"lissajous",
         "Lissajous curve on the first layer, centered on the bed",
         {{"A", fmt(l.A), "x amplitude, mm"},
          {"B", fmt(l.B), "y amplitude, mm"},
          {"a", std::to_string(l.a), "x lobes, integer"},
          {"b", std::to_string(l.b), "y lobes, integer"},
          {"delta", fmt(l.delta), "phase, radians"},
          {"step", fmt(l.step), "parameter step, radians"},
          {"z", fmt(l.z), "layer height, mm"}}},
        {"velocity-cube",
         "Cube whose front face alternates between two speeds",
         {{"speedA", fmt(v.speed_a), "speed in odd regions, mm/s"},
          {"speedB", fmt(v.speed_b), "speed in even regions, mm/s"},
          {"cubeLen", fmt(v.cube_len), "cube side, mm"},
          {"checkerLen", fmt(v.checker_len), "checker size, mm"},
          {"layerHeight", fmt(v.layer_height), "layer height, mm"},
          {"originX", "centered", "front-left corner x, mm"},
          {"originY", "centered", "front-left corner y, mm"}}},
        {"dot-bridge",
         "Two anchor dots joined by a fast bridge",
         {{"xStart", fmt(d.x_start), "first dot x, mm"},
          {"xEnd", fmt(d.x_end), "second dot x, mm"},
          {"y", fmt(d.y), "y, mm"},
          {"z", fmt(d.z), "base height, mm"},
          {"dotHeight", fmt(d.dot_height), "dot height, mm"},
          {"slowSpeed", fmt(d.slow_speed), "dot speed, mm/s"},
          {"fastSpeed", fmt(d.fast_speed), "bridge speed, mm/s"},
          {"eAmount", fmt(d.e_amount), "filament per dot, mm"}}},
        {"wave",
         "Cosine wave in the XZ plane under the given accelerations",
         {{"A", fmt(w.A), "amplitude, mm"},
          {"xStart", fmt(w.x_start), "start x, mm"},
          {"xEnd", fmt(w.x_end), "end x, mm"},
          {"xStep", fmt(w.x_step), "sample spacing, mm"},
          {"y", fmt(w.y), "y, mm"},
          {"a", "unset", "sets ax, ay and az together, mm/s^2"},
          {"ax", fmt(w.ax), "x acceleration, mm/s^2"},
          {"ay", fmt(w.ay), "y acceleration, mm/s^2"},
          {"az", fmt(w.az), "z acceleration, mm/s^2"}}},
        {"handle",
         "Handle between two probed points on an object",
         {{"p1x", "", "first probe x, mm"},
          {"p1y", "", "first probe y, mm"},
          {"p1z", "", "first probe z, mm"},
          {"p2x", "", "second probe x, mm"},
          {"p2y", "", "second probe y, mm"},
          {"p2z", "", "second probe z, mm"},
          {"clearance", fmt(o.clearance), "travel height above the higher probe, mm"},
          {"width", fmt(o.width), "handle width, mm"},
          {"layers", std::to_string(o.layers), "layer count, integer"},
          {"layerHeight", fmt(o.layer_height), "layer height, mm"}}},
        {"bed-level",
         "Guided nozzle tour over the leveling points",
         {{"inset", fmt(b.inset), "distance from the bed edges, mm"},
          {"z", fmt(b.z), "probe height, mm"},
          {"hop", fmt(b.hop), "travel height, mm"}}},
        {"spiral-vase",
         "Single-wall spiral vase",
         {{"radius", fmt(s.radius), "radius, mm"},
          {"height", fmt(s.height), "height, mm"},
          {"layerHeight", fmt(s.layer_height), "rise per turn, mm"},
          {"segmentsPerTurn", std::to_string(s.segments_per_turn), "integer"},
          {"speed", fmt(s.speed), "print speed, mm/s"}}},
    };
  }();
  return catalog;
}

const RecipeInfo* find_recipe(std::string_view name) {
  for (const auto& r : recipe_catalog()) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

Toolpath generate(std::string_view name, const MachineProfile& profile, const ParamMap& params) {
  Binder b{params, std::string(name), {}};
  if (name == "lissajous") {
    LissajousParams p;
    b.num("A", p.A);
    b.num("B", p.B);
    b.integer("a", p.a);
    b.integer("b", p.b);
    b.num("delta", p.delta);
    b.num("step", p.step);
    b.num("z", p.z);
    b.finish();
    return lissajous(profile, p);
  }
  if (name == "velocity-cube") {
    VelocityCubeParams p;
    b.num("speedA", p.speed_a);
    b.num("speedB", p.speed_b);
    b.num("cubeLen", p.cube_len);
    b.num("checkerLen", p.checker_len);
    b.num("layerHeight", p.layer_height);
    const bool has_x = params.count("originX") > 0, has_y = params.count("originY") > 0;
    if (has_x != has_y) throw ArgumentError("velocity-cube: give both originX and originY");
    if (has_x) {
      Point3 o;
      b.num("originX", o.x);
      b.num("originY", o.y);
      p.origin = o;
    } else {
      b.get("originX");
      b.get("originY");
    }
    b.finish();
    return velocity_cube(profile, p);
  }
  if (name == "dot-bridge") {
    DotBridgeParams p;
    b.num("xStart", p.x_start);
    b.num("xEnd", p.x_end);
    b.num("y", p.y);
    b.num("z", p.z);
    b.num("dotHeight", p.dot_height);
    b.num("slowSpeed", p.slow_speed);
    b.num("fastSpeed", p.fast_speed);
    b.num("eAmount", p.e_amount);
    b.finish();
    return dot_bridge(profile, p);
  }
  if (name == "wave") {
    WaveParams p;
    b.num("A", p.A);
    b.num("xStart", p.x_start);
    b.num("xEnd", p.x_end);
    b.num("xStep", p.x_step);
    b.num("y", p.y);
    double a = 0;
    if (params.count("a")) {
      b.num("a", a);
      p.ax = p.ay = p.az = a;
    } else {
      b.get("a");
    }
    b.num("ax", p.ax);
    b.num("ay", p.ay);
    b.num("az", p.az);
    b.finish();
    return wave(profile, p);
  }
  if (name == "handle") {
    OverlayParams p;
    for (const char* k : {"p1x", "p1y", "p1z", "p2x", "p2y", "p2z"}) {
      if (!params.count(k)) throw ArgumentError(std::string("handle: missing parameter ") + k);
    }
    b.num("p1x", p.p1.x);
    b.num("p1y", p.p1.y);
    b.num("p1z", p.p1.z);
    b.num("p2x", p.p2.x);
    b.num("p2y", p.p2.y);
    b.num("p2z", p.p2.z);
    b.num("clearance", p.clearance);
    b.num("width", p.width);
    b.integer("layers", p.layers);
    b.num("layerHeight", p.layer_height);
    b.finish();
    return overlay_handle(profile, p);
  }
  if (name == "bed-level") {
    BedLevelParams p;
    b.num("inset", p.inset);
    b.num("z", p.z);
    b.num("hop", p.hop);
    b.finish();
    return bed_level_tour(profile, p);
  }
  if (name == "spiral-vase") {
    SpiralVaseParams p;
    b.num("radius", p.radius);
    b.num("height", p.height);
    b.num("layerHeight", p.layer_height);
    b.integer("segmentsPerTurn", p.segments_per_turn);
    b.num("speed", p.speed);
    b.finish();
    return spiral_vase(profile, p);
  }
  throw ArgumentError("unknown recipe '" + std::string(name) + "'");
}

}  // namespace fab::recipes
