#include "mvb/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mvb {

void PreprocessConfig::validate() const {
  if (resize_to < 1 || crop_to < 1) throw std::invalid_argument("preprocess sizes must be positive");
  if (crop_to > resize_to) throw std::invalid_argument("crop_to must not exceed resize_to");
}

Image apply_mask(const Image& image, std::span<const Point> polygon) {
  if (!polygon_within(polygon, image.width, image.height)) {
    throw GeometryError("mask polygon leaves the image bounds");
  }
  const auto coverage = rasterize_polygon(polygon, image.width, image.height);
  Image out = image;
  const int c = image.channels;
  for (std::size_t i = 0; i < coverage.size(); ++i) {
    if (coverage[i]) continue;
    std::fill_n(out.pixels.begin() + static_cast<std::ptrdiff_t>(i * c), c, std::uint8_t{0});
  }
  return out;
}

FloatImage resize_region(const Image& image, const BBox& bbox, int size) {
  if (bbox.width() <= 0 || bbox.height() <= 0) throw GeometryError("degenerate bbox");
  if (bbox.x_min < 0 || bbox.y_min < 0 || bbox.x_max > image.width || bbox.y_max > image.height) {
    throw GeometryError("bbox leaves the image bounds");
  }
  FloatImage out(size, size, image.channels);
  const double sx = static_cast<double>(bbox.width()) / size;
  const double sy = static_cast<double>(bbox.height()) / size;
  const double x_hi = bbox.x_max - 1;
  const double y_hi = bbox.y_max - 1;
  for (int oy = 0; oy < size; ++oy) {
    const double fy = std::clamp(bbox.y_min + (oy + 0.5) * sy - 0.5, double(bbox.y_min), y_hi);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, bbox.y_max - 1);
    const double wy = fy - y0;
    for (int ox = 0; ox < size; ++ox) {
      const double fx = std::clamp(bbox.x_min + (ox + 0.5) * sx - 0.5, double(bbox.x_min), x_hi);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, bbox.x_max - 1);
      const double wx = fx - x0;
      for (int c = 0; c < image.channels; ++c) {
        const double top = (1 - wx) * image.at(x0, y0, c) + wx * image.at(x1, y0, c);
        const double bottom = (1 - wx) * image.at(x0, y1, c) + wx * image.at(x1, y1, c);
        out.at(ox, oy, c) = static_cast<float>((1 - wy) * top + wy * bottom);
      }
    }
  }
  return out;
}

void standardize(FloatImage& image) {
  const std::size_t pixels = static_cast<std::size_t>(image.width) * image.height;
  for (std::size_t i = 0; i < pixels; ++i) {
    for (int c = 0; c < image.channels && c < 3; ++c) {
      float& v = image.data[i * image.channels + c];
      v = (v / 255.0F - kChannelMean[c]) / kChannelStd[c];
    }
  }
}

CropOffset sample_crop_offset(const PreprocessConfig& config, Rng& rng) {
  config.validate();
  const int slack = config.resize_to - config.crop_to;
  if (!config.train_mode) return {slack / 2, slack / 2};
  const int x = static_cast<int>(rng.uniform_int(0, slack));
  const int y = static_cast<int>(rng.uniform_int(0, slack));
  return {x, y};
}

FloatImage crop_window(const FloatImage& image, CropOffset offset, int size) {
  if (offset.x < 0 || offset.y < 0 || offset.x + size > image.width ||
      offset.y + size > image.height) {
    throw std::out_of_range("crop window leaves the image");
  }
  FloatImage out(size, size, image.channels);
  const std::size_t row = static_cast<std::size_t>(size) * image.channels;
  for (int y = 0; y < size; ++y) {
    const float* src = &image.data[(static_cast<std::size_t>(offset.y + y) * image.width + offset.x) *
                                   image.channels];
    std::copy_n(src, row, &out.data[static_cast<std::size_t>(y) * row]);
  }
  return out;
}

FloatImage crop_and_standardize(const Image& image, const BBox& bbox,
                                const PreprocessConfig& config, Rng& rng) {
  config.validate();
  FloatImage resized = resize_region(image, bbox, config.resize_to);
  standardize(resized);
  return crop_window(resized, sample_crop_offset(config, rng), config.crop_to);
}

// ---------------------------------------------------------------------------

PreparedImageCache::PreparedImageCache(std::filesystem::path image_dir, PreprocessConfig config)
    : loader_([dir = std::move(image_dir)](const ImageRecord& r) {
        return read_png(dir / r.image_path);
      }),
      config_(config) {
  config_.validate();
}

PreparedImageCache::PreparedImageCache(Loader loader, PreprocessConfig config)
    : loader_(std::move(loader)), config_(config) {
  config_.validate();
}

const FloatImage& PreparedImageCache::prepared(const ImageRecord& record) {
  auto it = cache_.find(record.image_id);
  if (it != cache_.end()) return it->second;
  Image raw = loader_(record);
  if (config_.use_mask) raw = apply_mask(raw, record.mask_polygon);
  FloatImage resized = resize_region(raw, record.bbox, config_.resize_to);
  standardize(resized);
  return cache_.emplace(record.image_id, std::move(resized)).first->second;
}

FloatImage PreparedImageCache::sample(const ImageRecord& record, Rng& rng) {
  const FloatImage& base = prepared(record);
  return crop_window(base, sample_crop_offset(config_, rng), config_.crop_to);
}

FloatImage PreparedImageCache::centered(const ImageRecord& record) {
  PreprocessConfig eval = config_;
  eval.train_mode = false;
  Rng unused(0);
  return crop_window(prepared(record), sample_crop_offset(eval, unused), config_.crop_to);
}

}  // namespace mvb
