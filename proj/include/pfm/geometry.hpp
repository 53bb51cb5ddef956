#pragma once

#include <cmath>
#include <vector>

namespace pfm {

struct Point2 {
  float x = 0.0f;
  float y = 0.0f;
};

inline float distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

// One annotation of K joints.
using Pose = std::vector<Point2>;

}  // namespace pfm
