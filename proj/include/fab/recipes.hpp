#pragma once

// Parametric toolpath generators. Every generator is deterministic and
// authors in strict bounds mode, so a result always fits the envelope.

#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fab/geometry.hpp"
#include "fab/profile.hpp"
#include "fab/toolpath.hpp"

namespace fab::recipes {

// x = cx + A sin(a t + delta), y = cy + B sin(b t), t = i * step for
// t in [0, 2 pi], centered on the bed.
struct LissajousParams {
  double A = 100.0;
  double B = 100.0;
  int a = 5;
  int b = 4;
  double delta = std::numbers::pi / 2;
  double step = 2 * std::numbers::pi / 200;
  double z = 0.2;
};

// Number of samples: floor(2 pi / step) + 1.
std::size_t lissajous_samples(const LissajousParams& p);
Point3 lissajous_point(const MachineProfile& profile, const LissajousParams& p, std::size_t i);
Toolpath lissajous(const MachineProfile& profile, const LissajousParams& p = {});

// Cube perimeter printed layer by layer. The front face (y = origin.y) is
// split into checker-length pieces whose speed alternates between speed_a
// and speed_b, starting from region = floor(z / checker_len) mod 2.
struct VelocityCubeParams {
  double speed_a = 30.0;
  double speed_b = 20.0;
  double cube_len = 20.0;
  double checker_len = 5.0;
  double layer_height = 0.2;
  std::optional<Point3> origin;  // front-left corner; default centers the cube
};

// 1-based layer i sits at z = i * layer_height.
std::size_t velocity_cube_layers(const VelocityCubeParams& p);
int velocity_cube_region(const VelocityCubeParams& p, double z);
Toolpath velocity_cube(const MachineProfile& profile, const VelocityCubeParams& p = {});

// Two over-extruded anchor dots joined by a fast bridge.
struct DotBridgeParams {
  double x_start = 100.0;
  double x_end = 130.0;
  double y = 110.0;
  double z = 0.2;
  double dot_height = 4.0;
  double slow_speed = 0.5;
  double fast_speed = 30.0;
  double e_amount = 4.0;
};

Toolpath dot_bridge(const MachineProfile& profile, const DotBridgeParams& p = {});

// z = A cos(theta + pi) + A with theta mapped from [x_start, x_end] to
// [0, 2 pi]; preceded by the acceleration settings under test.
struct WaveParams {
  double A = 10.0;
  double x_start = 60.0;
  double x_end = 160.0;
  double x_step = 1.0;
  double y = 110.0;
  double ax = 500.0;
  double ay = 500.0;
  double az = 500.0;
};

double wave_z(const WaveParams& p, double x);
Toolpath wave(const MachineProfile& profile, const WaveParams& p = {});

// A handle printed across two probed points on an object. Each layer is a
// spine from p1 to p2 followed by a stadium outline of the given width
// around it, lifted by layer_height per layer. Heights along the outline
// follow the spine, so nothing goes below the lower probe.
struct OverlayParams {
  Position p1;
  Position p2;
  double clearance = 5.0;  // travel height above the higher probe
  double width = 3.0;
  int layers = 10;
  double layer_height = 0.2;
  int cap_segments = 12;
};

Toolpath overlay_handle(const MachineProfile& profile, const OverlayParams& p);

// Home, then visit the four inset corners and the center at probe height,
// pausing at each for the operator.
struct BedLevelParams {
  double inset = 30.0;
  double z = 0.2;
  double hop = 5.0;
};

std::vector<Point3> bed_level_stops(const MachineProfile& profile, const BedLevelParams& p = {});
Toolpath bed_level_tour(const MachineProfile& profile, const BedLevelParams& p = {});

// Single-wall spiral with continuously rising z.
struct SpiralVaseParams {
  double radius = 20.0;
  double height = 30.0;
  double layer_height = 0.2;
  int segments_per_turn = 60;
  double speed = 20.0;
};

Toolpath spiral_vase(const MachineProfile& profile, const SpiralVaseParams& p = {});

// ---------------------------------------------------------------------------
// Name-based access for the CLI and the service.

struct ParamInfo {
  std::string name;
  std::string default_value;
  std::string doc;  // includes the unit
};

struct RecipeInfo {
  std::string name;
  std::string summary;
  std::vector<ParamInfo> params;
};

using ParamMap = std::map<std::string, std::string>;

const std::vector<RecipeInfo>& recipe_catalog();
const RecipeInfo* find_recipe(std::string_view name);

// Throws ArgumentError for an unknown recipe, an unknown parameter or a
// value that does not parse. Parameters not given keep their defaults.
Toolpath generate(std::string_view name, const MachineProfile& profile, const ParamMap& params);

}  // namespace fab::recipes
