#include "advdet/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "advdet/error.hpp"

namespace advdet {

std::vector<Point2> convex_hull(std::vector<Point2> points) {
  if (points.size() < 3) throw DegenerateInputError("convex hull needs >= 3 points");

  std::sort(points.begin(), points.end(), [](const Point2& a, const Point2& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  points.erase(std::unique(points.begin(), points.end()), points.end());
  if (points.size() < 3) throw DegenerateInputError("convex hull needs >= 3 distinct points");

  const size_t n = points.size();
  std::vector<Point2> hull(2 * n);
  size_t k = 0;

  // Lower chain, then upper chain; strict left turns keep collinear
  // mid-points off the hull.
  for (size_t i = 0; i < n; ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], points[i]) <= 0.0) --k;
    hull[k++] = points[i];
  }
  const size_t lower = k + 1;
  for (size_t i = n - 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], points[i]) <= 0.0) --k;
    hull[k++] = points[i];
  }
  hull.resize(k - 1);

  if (hull.size() < 3) throw DegenerateInputError("hull input is collinear");
  return hull;
}

bool point_in_polygon(const Point2& p, const std::vector<Point2>& polygon) {
  const size_t n = polygon.size();
  bool inside = false;
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point2& a = polygon[j];
    const Point2& b = polygon[i];

    // On-edge counts as inside.
    const double d = cross(a, b, p);
    if (d == 0.0 && p.x >= std::min(a.x, b.x) && p.x <= std::max(a.x, b.x) &&
        p.y >= std::min(a.y, b.y) && p.y <= std::max(a.y, b.y))
      return true;

    const bool crosses = (b.y > p.y) != (a.y > p.y);
    if (crosses) {
      const double x_at = b.x + (p.y - b.y) * (a.x - b.x) / (a.y - b.y);
      if (p.x < x_at) inside = !inside;
    }
  }
  return inside;
}

RegionMask rasterize_hull(const std::vector<Point2>& hull, int height, int width) {
  if (hull.size() < 3) throw DegenerateInputError("cannot rasterize degenerate hull");
  double min_x = hull[0].x, max_x = hull[0].x, min_y = hull[0].y, max_y = hull[0].y;
  for (const auto& p : hull) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const int x0 = std::max(0, static_cast<int>(std::floor(min_x)));
  const int x1 = std::min(width - 1, static_cast<int>(std::ceil(max_x)));
  const int y0 = std::max(0, static_cast<int>(std::floor(min_y)));
  const int y1 = std::min(height - 1, static_cast<int>(std::ceil(max_y)));

  RegionMask mask(height, width);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (point_in_polygon({static_cast<double>(x), static_cast<double>(y)}, hull))
        mask.set(y, x, true);
  return mask;
}

}  // namespace advdet
