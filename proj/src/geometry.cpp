#include "mvb/geometry.hpp"

#include <algorithm>
#include <limits>

namespace mvb {

std::int64_t polygon_area2(std::span<const Point> polygon) {
  std::int64_t acc = 0;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = polygon[i];
    const Point& b = polygon[(i + 1) % n];
    acc += static_cast<std::int64_t>(a.x) * b.y - static_cast<std::int64_t>(b.x) * a.y;
  }
  return acc;
}

BBox bbox_from_polygon(std::span<const Point> polygon) {
  if (polygon.size() < 3) {
    throw GeometryError("polygon needs at least 3 vertices");
  }
  if (polygon_area2(polygon) == 0) {
    throw GeometryError("polygon has zero area");
  }
  BBox box{std::numeric_limits<int>::max(), std::numeric_limits<int>::max(),
           std::numeric_limits<int>::min(), std::numeric_limits<int>::min()};
  for (const Point& p : polygon) {
    box.x_min = std::min(box.x_min, p.x);
    box.y_min = std::min(box.y_min, p.y);
    box.x_max = std::max(box.x_max, p.x);
    box.y_max = std::max(box.y_max, p.y);
  }
  return box;
}

bool polygon_within(std::span<const Point> polygon, int width, int height) {
  return std::all_of(polygon.begin(), polygon.end(), [&](const Point& p) {
    return p.x >= 0 && p.y >= 0 && p.x <= width && p.y <= height;
  });
}

namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) {  // b > 0
  return a >= 0 ? (a + b - 1) / b : -((-a) / b);
}

}  // namespace

std::vector<std::uint8_t> rasterize_polygon(std::span<const Point> polygon,
                                            int width, int height) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(width) * height, 0);
  const std::size_t n = polygon.size();
  if (n < 3) return mask;

  // Each crossing is stored as the first column whose center lies at or right
  // of it, computed exactly in integers (centers sit at odd half-units).
  std::vector<std::int64_t> crossings;
  for (int y = 0; y < height; ++y) {
    const std::int64_t yc2 = 2 * static_cast<std::int64_t>(y) + 1;
    crossings.clear();
    for (std::size_t i = 0; i < n; ++i) {
      Point a = polygon[i];
      Point b = polygon[(i + 1) % n];
      if ((2 * a.y < yc2) == (2 * b.y < yc2)) continue;
      if (b.y < a.y) std::swap(a, b);
      const std::int64_t dy = b.y - a.y;
      const std::int64_t dx = b.x - a.x;
      // crossing x = num / (2 dy); passed by column x when num <= (2x + 1) dy.
      const std::int64_t num = 2 * static_cast<std::int64_t>(a.x) * dy + (yc2 - 2 * a.y) * dx;
      crossings.push_back(ceil_div(num - dy, 2 * dy));
    }
    if (crossings.empty()) continue;
    std::sort(crossings.begin(), crossings.end());

    // A center is inside when an odd number of crossings lie strictly to its right.
    std::size_t passed = 0;
    auto* row = mask.data() + static_cast<std::size_t>(y) * width;
    for (int x = 0; x < width; ++x) {
      while (passed < crossings.size() && crossings[passed] <= x) ++passed;
      row[x] = ((crossings.size() - passed) & 1U) ? 1 : 0;
    }
  }
  return mask;
}

}  // namespace mvb
