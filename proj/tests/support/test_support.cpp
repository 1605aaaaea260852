#include "test_support.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <unistd.h>

namespace mvb::testing {

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("mvb_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

DatasetManifest random_manifest(Rng& rng, int n_identities, int image_size) {
  DatasetManifest m;
  const Polygon square{{4, 4}, {image_size - 4, 4}, {image_size - 4, image_size - 4}, {4, image_size - 4}};
  for (int i = 0; i < n_identities; ++i) {
    const std::string id = "id" + std::to_string(1000 + i);
    const auto material = static_cast<Material>(rng.uniform_int(0, 3));
    for (const Domain d : {Domain::kBhs, Domain::kCheckpoint}) {
      const int views = static_cast<int>(rng.uniform_int(1, max_views(d)));
      for (int v = 1; v <= views; ++v) {
        ImageRecord r;
        r.identity_id = id;
        r.domain = d;
        r.view_index = v;
        r.image_id = id + "_" + std::string(to_string(d)) + "_" + std::to_string(v);
        r.image_path = "images/" + r.image_id + ".png";
        r.width = image_size;
        r.height = image_size;
        r.mask_polygon = square;
        r.bbox = bbox_from_polygon(square);
        r.material = material;
        m.records.push_back(std::move(r));
      }
    }
  }
  m.reindex();
  return m;
}

Polygon random_polygon(Rng& rng, int width, int height) {
  const int n = static_cast<int>(rng.uniform_int(3, 12));
  std::vector<double> angles;
  for (int i = 0; i < n; ++i) angles.push_back(rng.uniform(0.0, 2 * std::numbers::pi));
  std::sort(angles.begin(), angles.end());
  const double cx = rng.uniform(0.3, 0.7) * width;
  const double cy = rng.uniform(0.3, 0.7) * height;
  const double rmax = 0.3 * std::min(width, height);
  Polygon poly;
  for (double a : angles) {
    const double r = rng.uniform(0.2, 1.0) * rmax;
    const Point p{static_cast<int>(std::lround(cx + r * std::cos(a))), static_cast<int>(std::lround(cy + r * std::sin(a)))};
    if (poly.empty() || !(poly.back() == p)) poly.push_back(p);
  }
  if (polygon_area2(poly) == 0 || poly.size() < 3) return random_polygon(rng, width, height);
  return poly;
}

bool pixel_inside(const Polygon& polygon, int x, int y) {
  // Doubled coordinates put pixel centers on odd integers.
  const std::int64_t px = 2 * static_cast<std::int64_t>(x) + 1;
  const std::int64_t py = 2 * static_cast<std::int64_t>(y) + 1;
  bool inside = false;
  for (std::size_t i = 0, j = polygon.size() - 1; i < polygon.size(); j = i++) {
    const std::int64_t xi = 2 * polygon[i].x, yi = 2 * polygon[i].y;
    const std::int64_t xj = 2 * polygon[j].x, yj = 2 * polygon[j].y;
    if ((yi > py) == (yj > py)) continue;
    // Edge crosses the horizontal line through the center; does it do so
    // strictly to the right? Compare px < xi + (py - yi)(xj - xi)/(yj - yi).
    const std::int64_t lhs = (px - xi) * (yj - yi);
    const std::int64_t rhs = (py - yi) * (xj - xi);
    const bool right = (yj - yi) > 0 ? lhs < rhs : lhs > rhs;
    if (right) inside = !inside;
  }
  return inside;
}

std::vector<IdentityCounts> identity_counts(const DatasetManifest& manifest) {
  std::map<std::string, IdentityCounts> counts;
  for (const auto& r : manifest.records) {
    auto& c = counts[r.identity_id];
    (r.domain == Domain::kBhs ? c.bhs : c.checkpoint) += 1;
  }
  std::vector<IdentityCounts> out;
  for (const auto& [id, c] : counts) out.push_back(c);
  return out;
}

}  // namespace mvb::testing
