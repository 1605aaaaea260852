#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace mvb {

/// Integer pixel-grid coordinate. Pixel (i, j) covers [i, i+1) x [j, j+1),
/// so its center sits at (i + 0.5, j + 0.5).
struct Point {
  int x = 0;
  int y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

using Polygon = std::vector<Point>;

/// Axis-aligned box in grid coordinates. The pixels it covers are
/// x_min..x_max-1 by y_min..y_max-1.
struct BBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  int width() const { return x_max - x_min; }
  int height() const { return y_max - y_min; }
  friend bool operator==(const BBox&, const BBox&) = default;
};

class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Twice the signed shoelace area.
std::int64_t polygon_area2(std::span<const Point> polygon);

/// Minimum enclosing axis-aligned rectangle of the vertices. Rejects
/// polygons with fewer than three vertices or zero area.
BBox bbox_from_polygon(std::span<const Point> polygon);

bool polygon_within(std::span<const Point> polygon, int width, int height);

/// Even-odd fill evaluated at pixel centers, one scanline at a time.
/// Returns a width*height row-major coverage mask (1 inside, 0 outside).
std::vector<std::uint8_t> rasterize_polygon(std::span<const Point> polygon,
                                            int width, int height);

}  // namespace mvb
