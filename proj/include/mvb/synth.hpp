#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mvb/data_model.hpp"
#include "mvb/geometry.hpp"
#include "mvb/image.hpp"
#include "mvb/rng.hpp"

namespace mvb {

struct DomainNoise {
  double checkpoint_blur = 0.5;
  double color_shift = 0.3;
  double occlusion_prob = 0.3;
  double missing_view_prob = 0.2;
  friend bool operator==(const DomainNoise&, const DomainNoise&) = default;
};

struct SynthConfig {
  int n_identities = 100;
  int bhs_views = 3;
  int checkpoint_views = 4;
  int image_size = 320;
  DomainNoise noise;
  /// 0 gives fully independent identities; 1 collapses every identity onto a
  /// shared prototype so only decals tell them apart.
  double distractor_similarity = 0.2;
  int max_decals = 3;
  /// Relative frequency of HARD, SOFT, PAPERBOARD, OTHERS.
  std::array<double, 4> material_weights{2767, 1120, 198, 434};
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

struct Rgb {
  double r = 0, g = 0, b = 0;
};

enum class DecalShape { kRect, kDisc, kRope };

/// Distinguishing mark in object coordinates (fractions of the image size,
/// origin at the body center).
struct Decal {
  DecalShape shape = DecalShape::kRect;
  double u = 0, v = 0;
  double half_u = 0, half_v = 0;
  Rgb color;
};

struct IdentitySpec {
  int index = 0;
  std::string identity_id;
  Material material = Material::kHard;
  Rgb body;
  Rgb accent;
  double width = 0.7;   // body extent, fraction of image size
  double height = 0.66;
  double bevel = 0.08;  // fraction of min(width, height)
  double pattern_period = 0.1;
  double pattern_phase = 0.0;
  double pattern_contrast = 0.2;
  std::vector<Decal> decals;
};

struct Pose {
  double angle = 0.0;  // radians
  double scale_x = 1.0;
  double scale_y = 1.0;
  double shift_x = 0.0;  // fraction of image size
  double shift_y = 0.0;
  bool mirrored = false;
};

struct RenderedView {
  Image image;
  Polygon mask_polygon;
  std::optional<BBox> occluder;
  Pose pose;
};

std::string identity_name(int index);

/// Pure function of (config.seed, index, similarity settings).
IdentitySpec sample_identity(const SynthConfig& config, int index);

Pose sample_pose(Domain domain, int view_index, Rng& rng);

/// Body outline under a pose, in integer pixel coordinates.
Polygon body_polygon(const IdentitySpec& identity, const Pose& pose, int image_size);

RenderedView render_view(const IdentitySpec& identity, Domain domain, int view_index,
                         const SynthConfig& config, Rng& rng);

/// Same as render_view with the pose fixed by the caller; background, lighting
/// and occlusion still draw from `rng`.
RenderedView render_view_with_pose(const IdentitySpec& identity, Domain domain,
                                   const Pose& pose, const SynthConfig& config, Rng& rng);

/// Writes images/<identity>/<DOMAIN>_<view>.png plus manifest.jsonl under
/// out_dir and returns the manifest.
DatasetManifest generate_dataset(const SynthConfig& config, const std::filesystem::path& out_dir);

}  // namespace mvb
