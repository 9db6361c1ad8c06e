#pragma once

#include <vector>

#include "advdet/image.hpp"

namespace advdet {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

// Twice the signed area of triangle (o, a, b); > 0 means a left turn in a
// y-up frame.
inline double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

/// Convex hull via monotone chain; vertices returned in counter-clockwise
/// order (positive signed area). Collinear mid-edge points are dropped.
/// Throws DegenerateInputError for < 3 points or an all-collinear set.
std::vector<Point2> convex_hull(std::vector<Point2> points);

/// True if p is inside or on the polygon boundary.
bool point_in_polygon(const Point2& p, const std::vector<Point2>& polygon);

/// Mask of pixel centers (x=col, y=row) inside or on the hull polygon.
RegionMask rasterize_hull(const std::vector<Point2>& hull, int height, int width);

}  // namespace advdet
