#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "advdet/error.hpp"
#include "advdet/geometry.hpp"
#include "advdet/rng.hpp"

using namespace advdet;

namespace {

// Brute-force hull oracle: (a, b) is a hull edge iff every other point
// lies strictly on its left. O(n^3) overall.
std::set<std::pair<double, double>> brute_force_hull_vertices(const std::vector<Point2>& pts) {
  std::set<std::pair<double, double>> vertices;
  const size_t n = pts.size();
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      bool all_left = true;
      for (size_t k = 0; k < n; ++k) {
        if (k == i || k == j) continue;
        if (cross(pts[i], pts[j], pts[k]) <= 0.0) {
          all_left = false;
          break;
        }
      }
      if (all_left) {
        vertices.insert({pts[i].x, pts[i].y});
        vertices.insert({pts[j].x, pts[j].y});
      }
    }
  }
  return vertices;
}

// Winding-number point-in-polygon oracle (different algorithm from the
// implementation's crossing test).
bool winding_oracle(const Point2& p, const std::vector<Point2>& poly) {
  double angle = 0.0;
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const Point2& a = poly[i];
    const Point2& b = poly[(i + 1) % n];
    const double d = cross(a, b, p);
    if (d == 0.0 && p.x >= std::min(a.x, b.x) - 1e-12 && p.x <= std::max(a.x, b.x) + 1e-12 &&
        p.y >= std::min(a.y, b.y) - 1e-12 && p.y <= std::max(a.y, b.y) + 1e-12)
      return true;  // boundary
    const double a1 = std::atan2(a.y - p.y, a.x - p.x);
    const double a2 = std::atan2(b.y - p.y, b.x - p.x);
    double da = a2 - a1;
    while (da > 3.14159265358979323846) da -= 2 * 3.14159265358979323846;
    while (da < -3.14159265358979323846) da += 2 * 3.14159265358979323846;
    angle += da;
  }
  return std::fabs(angle) > 3.14159265358979323846;
}

}  // namespace

TEST_CASE("convex hull basics") {
  SUBCASE("triangle is its own hull") {
    const std::vector<Point2> tri = {{0, 0}, {4, 0}, {2, 3}};
    const auto hull = convex_hull(tri);
    CHECK(hull.size() == 3);
    // counter-clockwise: positive signed area
    double area2 = 0.0;
    for (size_t i = 0; i < hull.size(); ++i) {
      const auto& a = hull[i];
      const auto& b = hull[(i + 1) % hull.size()];
      area2 += a.x * b.y - b.x * a.y;
    }
    CHECK(area2 > 0.0);
  }
  SUBCASE("interior point excluded") {
    const std::vector<Point2> pts = {{0, 0}, {4, 0}, {4, 4}, {0, 4}, {2, 2}};
    const auto hull = convex_hull(pts);
    CHECK(hull.size() == 4);
    for (const auto& v : hull) CHECK((v.x == 0 || v.x == 4));
  }
  SUBCASE("degenerate inputs") {
    CHECK_THROWS_AS(convex_hull({{0, 0}, {1, 1}}), DegenerateInputError);
    CHECK_THROWS_AS(convex_hull({{0, 0}, {1, 1}, {2, 2}, {3, 3}}), DegenerateInputError);
    CHECK_THROWS_AS(convex_hull({{1, 1}, {1, 1}, {1, 1}}), DegenerateInputError);
  }
}

TEST_CASE("convex hull matches brute-force oracle on random sets") {
  Rng rng(123);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 3 + static_cast<int>(rng.uniform_int(0, 57));
    std::vector<Point2> pts;
    for (int i = 0; i < n; ++i) pts.push_back({rng.uniform(0, 100), rng.uniform(0, 100)});

    const auto hull = convex_hull(pts);
    const auto oracle = brute_force_hull_vertices(pts);

    std::set<std::pair<double, double>> got;
    for (const auto& v : hull) got.insert({v.x, v.y});
    CHECK(got == oracle);

    // every input point inside or on the hull
    for (const auto& p : pts) CHECK(point_in_polygon(p, hull));
  }
}

TEST_CASE("rasterize_hull") {
  SUBCASE("axis-aligned square covers an 11x11 block") {
    const std::vector<Point2> square = {{10, 10}, {20, 10}, {20, 20}, {10, 20}};
    const auto hull = convex_hull(square);
    const auto mask = rasterize_hull(hull, 32, 32);
    CHECK(mask.count() == 121);
    for (int y = 10; y <= 20; ++y)
      for (int x = 10; x <= 20; ++x) CHECK(mask.at(y, x));
    CHECK_FALSE(mask.at(9, 10));
    CHECK_FALSE(mask.at(21, 20));
  }
  SUBCASE("hull covering the whole image is all true") {
    const std::vector<Point2> big = {{-5, -5}, {40, -5}, {40, 40}, {-5, 40}};
    const auto mask = rasterize_hull(convex_hull(big), 32, 32);
    CHECK(mask.count() == 32u * 32u);
  }
  SUBCASE("thin triangle matches the winding oracle per pixel") {
    const std::vector<Point2> thin = {{2.2, 3.1}, {29.7, 4.0}, {16.0, 5.4}};
    const auto hull = convex_hull(thin);
    const auto mask = rasterize_hull(hull, 32, 32);
    CHECK(mask.count() > 0);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        CHECK(mask.at(y, x) ==
              winding_oracle({static_cast<double>(x), static_cast<double>(y)}, hull));
  }
}
