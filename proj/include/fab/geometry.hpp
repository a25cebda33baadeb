#pragma once

#include <cmath>

namespace fab {

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Point3&, const Point3&) = default;
};

// Machine position. `e` is the cumulative extruder-axis position.
struct Position {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double e = 0.0;

  Point3 xyz() const { return {x, y, z}; }
  friend bool operator==(const Position&, const Position&) = default;
};

inline double distance(const Point3& a, const Point3& b) {
  return std::sqrt((b.x - a.x) * (b.x - a.x) + (b.y - a.y) * (b.y - a.y) +
                   (b.z - a.z) * (b.z - a.z));
}

inline double distance(const Position& a, const Position& b) {
  return distance(a.xyz(), b.xyz());
}

inline bool is_finite(const Point3& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z);
}

struct BoundingBox {
  Point3 min;
  Point3 max;
  bool empty = true;

  void extend(const Point3& p) {
    if (empty) {
      min = max = p;
      empty = false;
      return;
    }
    min = {std::fmin(min.x, p.x), std::fmin(min.y, p.y), std::fmin(min.z, p.z)};
    max = {std::fmax(max.x, p.x), std::fmax(max.y, p.y), std::fmax(max.z, p.z)};
  }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

}  // namespace fab
