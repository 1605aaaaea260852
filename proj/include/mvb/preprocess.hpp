#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mvb/data_model.hpp"
#include "mvb/geometry.hpp"
#include "mvb/image.hpp"
#include "mvb/rng.hpp"

namespace mvb {

struct PreprocessConfig {
  bool use_mask = false;
  int resize_to = 256;
  int crop_to = 224;
  /// Random crop offset when true, centered crop otherwise.
  bool train_mode = true;

  void validate() const;
  friend bool operator==(const PreprocessConfig&, const PreprocessConfig&) = default;
};

/// Per-channel RGB statistics of the usual ImageNet backbone pretraining,
/// applied as (v / 255 - mean) / std.
inline constexpr std::array<float, 3> kChannelMean{0.485F, 0.456F, 0.406F};
inline constexpr std::array<float, 3> kChannelStd{0.229F, 0.224F, 0.225F};

/// Interleaved float raster (HWC).
struct FloatImage {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<float> data;

  FloatImage() = default;
  FloatImage(int w, int h, int c = 3)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, 0.0F) {}

  float& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  friend bool operator==(const FloatImage&, const FloatImage&) = default;
};

struct CropOffset {
  int x = 0;
  int y = 0;
  friend bool operator==(const CropOffset&, const CropOffset&) = default;
};

/// Keeps pixels whose centers fall inside the polygon; zeroes the rest in
/// every channel. Throws GeometryError if the polygon leaves the image.
Image apply_mask(const Image& image, std::span<const Point> polygon);

/// Bilinear resize of the pixels covered by `bbox` to size x size, values in
/// [0, 255]. Sampling uses pixel-center alignment with edge clamping.
FloatImage resize_region(const Image& image, const BBox& bbox, int size);

void standardize(FloatImage& image);

CropOffset sample_crop_offset(const PreprocessConfig& config, Rng& rng);

FloatImage crop_window(const FloatImage& image, CropOffset offset, int size);

/// bbox crop -> resize_to^2 -> crop_to^2 window -> channel standardization.
FloatImage crop_and_standardize(const Image& image, const BBox& bbox,
                                const PreprocessConfig& config, Rng& rng);

/// Caches each record's masked, bbox-cropped, resized and standardized
/// raster; only the final crop window is drawn per request.
class PreparedImageCache {
 public:
  using Loader = std::function<Image(const ImageRecord&)>;

  PreparedImageCache(std::filesystem::path image_dir, PreprocessConfig config);
  PreparedImageCache(Loader loader, PreprocessConfig config);

  const PreprocessConfig& config() const { return config_; }

  /// The resize_to x resize_to standardized raster for a record.
  const FloatImage& prepared(const ImageRecord& record);

  /// A crop_to x crop_to window; random in train mode, centered otherwise.
  FloatImage sample(const ImageRecord& record, Rng& rng);
  FloatImage centered(const ImageRecord& record);

  std::size_t size() const { return cache_.size(); }

 private:
  Loader loader_;
  PreprocessConfig config_;
  std::map<std::string, FloatImage> cache_;
};

}  // namespace mvb
