#include "mvb/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "mvb/preprocess.hpp"

namespace mvb {

namespace {

constexpr double kDegree = std::numbers::pi / 180.0;

double lerp(double a, double b, double t) { return std::lerp(a, b, t); }

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  return {lerp(a.r, b.r, t), lerp(a.g, b.g, t), lerp(a.b, b.b, t)};
}

Rgb random_color(Rng& rng, double lo = 20.0, double hi = 235.0) {
  const double r = rng.uniform(lo, hi);
  const double g = rng.uniform(lo, hi);
  const double b = rng.uniform(lo, hi);
  return {r, g, b};
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

Material sample_material(const std::array<double, 4>& weights, Rng& rng) {
  double total = 0;
  for (double w : weights) total += w;
  double u = rng.uniform() * total;
  for (int i = 0; i < 4; ++i) {
    if (u < weights[i]) return static_cast<Material>(i);
    u -= weights[i];
  }
  return Material::kOthers;
}

// Identity attributes before blending with the shared prototype.
IdentitySpec sample_raw_identity(const SynthConfig& config, Rng& rng) {
  IdentitySpec s;
  s.material = sample_material(config.material_weights, rng);
  s.body = random_color(rng);
  s.accent = random_color(rng);
  s.width = rng.uniform(0.66, 0.84);
  s.height = rng.uniform(0.62, 0.78);
  s.bevel = rng.uniform(0.03, 0.15);
  s.pattern_period = rng.uniform(0.06, 0.16);
  s.pattern_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  s.pattern_contrast = rng.uniform(0.1, 0.35);
  return s;
}

void sample_decals(IdentitySpec& s, int max_decals, Rng& rng) {
  const int count = max_decals > 0 ? static_cast<int>(rng.uniform_int(0, max_decals)) : 0;
  for (int i = 0; i < count; ++i) {
    Decal d;
    d.shape = static_cast<DecalShape>(rng.uniform_int(0, 2));
    d.u = rng.uniform(-0.25, 0.25) * s.width;
    d.v = rng.uniform(-0.25, 0.25) * s.height;
    d.half_u = rng.uniform(0.04, 0.10);
    d.half_v = rng.uniform(0.04, 0.10);
    if (d.shape == DecalShape::kRope) d.half_u = rng.uniform(0.012, 0.025);
    d.color = random_color(rng, 0.0, 255.0);
    s.decals.push_back(d);
  }
}

Rgb shade(const IdentitySpec& s, double u, double v) {
  for (auto it = s.decals.rbegin(); it != s.decals.rend(); ++it) {
    const double du = u - it->u;
    const double dv = v - it->v;
    switch (it->shape) {
      case DecalShape::kRect:
        if (std::abs(du) < it->half_u && std::abs(dv) < it->half_v) return it->color;
        break;
      case DecalShape::kDisc:
        if ((du * du) / (it->half_u * it->half_u) + (dv * dv) / (it->half_v * it->half_v) < 1.0) {
          return it->color;
        }
        break;
      case DecalShape::kRope:
        if (std::abs(du) < it->half_u) return it->color;
        break;
    }
  }

  const double w = 2.0 * std::numbers::pi / s.pattern_period;
  switch (s.material) {
    case Material::kHard: {
      // Vertical ridges.
      const double f = 1.0 + s.pattern_contrast * std::sin(w * u + s.pattern_phase);
      return {s.body.r * f, s.body.g * f, s.body.b * f};
    }
    case Material::kSoft: {
      // Coarse weave.
      const double cell = s.pattern_period * 0.35;
      const long iu = std::lround(std::floor(u / cell));
      const long iv = std::lround(std::floor(v / cell));
      const double f = 1.0 + (((iu + iv) & 1L) ? 0.5 : -0.5) * s.pattern_contrast;
      return {s.body.r * f, s.body.g * f, s.body.b * f};
    }
    case Material::kPaperboard: {
      const Rgb board = lerp(s.body, Rgb{196, 158, 108}, 0.6);
      if (std::abs(v) < 0.05) return lerp(s.accent, Rgb{230, 220, 190}, 0.5);  // tape
      return board;
    }
    case Material::kOthers: {
      // Diagonal cover stripes.
      const double t = (u + v) / s.pattern_period + s.pattern_phase;
      return (t - std::floor(t)) < 0.5 ? s.body : lerp(s.body, s.accent, 0.6);
    }
  }
  return s.body;
}

struct Transform {
  double cx, cy, cos_a, sin_a, sx, sy, size;

  Transform(const Pose& p, int image_size)
      : cx(image_size * (0.5 + p.shift_x)), cy(image_size * (0.5 + p.shift_y)),
        cos_a(std::cos(p.angle)), sin_a(std::sin(p.angle)),
        sx(p.scale_x * (p.mirrored ? -1.0 : 1.0)), sy(p.scale_y), size(image_size) {}

  void forward(double u, double v, double& x, double& y) const {
    const double a = u * sx * size;
    const double b = v * sy * size;
    x = cx + cos_a * a - sin_a * b;
    y = cy + sin_a * a + cos_a * b;
  }
  void inverse(double x, double y, double& u, double& v) const {
    const double dx = x - cx;
    const double dy = y - cy;
    const double a = cos_a * dx + sin_a * dy;
    const double b = -sin_a * dx + cos_a * dy;
    u = a / (sx * size);
    v = b / (sy * size);
  }
};

void fill_rect(Image& img, int x0, int y0, int x1, int y1, const Rgb& c) {
  x0 = std::clamp(x0, 0, img.width);
  x1 = std::clamp(x1, 0, img.width);
  y0 = std::clamp(y0, 0, img.height);
  y1 = std::clamp(y1, 0, img.height);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      img.at(x, y, 0) = to_byte(c.r);
      img.at(x, y, 1) = to_byte(c.g);
      img.at(x, y, 2) = to_byte(c.b);
    }
  }
}

void draw_checkpoint_background(Image& img, Rng& rng) {
  const Rgb floor = random_color(rng, 140.0, 210.0);
  for (int y = 0; y < img.height; ++y) {
    const double t = 0.8 + 0.2 * y / std::max(1, img.height - 1);
    fill_rect(img, 0, y, img.width, y + 1, Rgb{floor.r * t, floor.g * t, floor.b * t});
  }
  const int clutter = 6;
  for (int i = 0; i < clutter; ++i) {
    const int w = static_cast<int>(rng.uniform(0.1, 0.4) * img.width);
    const int h = static_cast<int>(rng.uniform(0.1, 0.4) * img.height);
    const int x = static_cast<int>(rng.uniform_int(0, img.width - 1)) - w / 2;
    const int y = static_cast<int>(rng.uniform_int(0, img.height - 1)) - h / 2;
    fill_rect(img, x, y, x + w, y + h, random_color(rng, 0.0, 255.0));
  }
}

std::size_t count_overlap(const std::vector<std::uint8_t>& coverage, int width, const BBox& r) {
  std::size_t n = 0;
  for (int y = r.y_min; y < r.y_max; ++y) {
    for (int x = r.x_min; x < r.x_max; ++x) n += coverage[static_cast<std::size_t>(y) * width + x];
  }
  return n;
}

// Rectangle entering the object's bbox from one side; overlap with the object
// is capped at half the object area.
BBox place_occluder(const BBox& body, const std::vector<std::uint8_t>& coverage, int size,
                    Rng& rng) {
  const int side = static_cast<int>(rng.uniform_int(0, 3));
  double depth = rng.uniform(0.2, 0.45);
  const double span = rng.uniform(0.3, 0.8);
  const double start = rng.uniform(0.0, 1.0 - span);
  std::size_t area = 0;
  for (auto v : coverage) area += v;

  BBox r;
  for (int attempt = 0; attempt < 20; ++attempt) {
    const int bw = body.width();
    const int bh = body.height();
    switch (side) {
      case 0:  // from the left
        r = {0, body.y_min + int(start * bh), body.x_min + int(depth * bw),
             body.y_min + int((start + span) * bh)};
        break;
      case 1:  // from the right
        r = {body.x_max - int(depth * bw), body.y_min + int(start * bh), size,
             body.y_min + int((start + span) * bh)};
        break;
      case 2:  // from the top
        r = {body.x_min + int(start * bw), 0, body.x_min + int((start + span) * bw),
             body.y_min + int(depth * bh)};
        break;
      default:  // from the bottom
        r = {body.x_min + int(start * bw), body.y_max - int(depth * bh),
             body.x_min + int((start + span) * bw), size};
        break;
    }
    r.x_min = std::clamp(r.x_min, 0, size);
    r.x_max = std::clamp(r.x_max, 0, size);
    r.y_min = std::clamp(r.y_min, 0, size);
    r.y_max = std::clamp(r.y_max, 0, size);
    const std::size_t overlap = count_overlap(coverage, size, r);
    if (overlap > 0 && 2 * overlap <= area) return r;
    depth *= overlap == 0 ? 1.25 : 0.8;
  }
  return r;
}

void motion_blur(Image& img, int length) {
  if (length <= 1) return;
  const int half = length / 2;
  Image src = img;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        int sum = 0;
        for (int k = -half; k <= half; ++k) {
          sum += src.at(std::clamp(x + k, 0, img.width - 1), y, c);
        }
        img.at(x, y, c) = static_cast<std::uint8_t>((sum + (2 * half + 1) / 2) / (2 * half + 1));
      }
    }
  }
}

}  // namespace

void SynthConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string(name) + " must be in [0,1]");
  };
  if (n_identities < 1) throw std::invalid_argument("n_identities must be >= 1");
  if (bhs_views < 1 || bhs_views > max_views(Domain::kBhs)) {
    throw std::invalid_argument("bhs_views must be in [1,3]");
  }
  if (checkpoint_views < 1 || checkpoint_views > max_views(Domain::kCheckpoint)) {
    throw std::invalid_argument("checkpoint_views must be in [1,4]");
  }
  if (image_size < 32) throw std::invalid_argument("image_size must be >= 32");
  prob(noise.occlusion_prob, "occlusion_prob");
  prob(noise.missing_view_prob, "missing_view_prob");
  prob(distractor_similarity, "distractor_similarity");
  if (noise.checkpoint_blur < 0 || noise.color_shift < 0) {
    throw std::invalid_argument("noise magnitudes must be non-negative");
  }
  if (max_decals < 0) throw std::invalid_argument("max_decals must be >= 0");
}

std::string identity_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05d", index);
  return buf;
}

IdentitySpec sample_identity(const SynthConfig& config, int index) {
  auto proto_rng = Rng::substream(config.seed, "synth.prototype");
  const IdentitySpec proto = sample_raw_identity(config, proto_rng);

  auto rng = Rng::substream(config.seed, "synth.identity", static_cast<std::uint64_t>(index));
  IdentitySpec own = sample_raw_identity(config, rng);
  const double s = config.distractor_similarity;
  const bool proto_material = rng.uniform() < s;

  IdentitySpec out;
  out.index = index;
  out.identity_id = identity_name(index);
  out.material = proto_material ? proto.material : own.material;
  out.body = lerp(own.body, proto.body, s);
  out.accent = lerp(own.accent, proto.accent, s);
  out.width = lerp(own.width, proto.width, s);
  out.height = lerp(own.height, proto.height, s);
  out.bevel = lerp(own.bevel, proto.bevel, s);
  out.pattern_period = lerp(own.pattern_period, proto.pattern_period, s);
  out.pattern_phase = lerp(own.pattern_phase, proto.pattern_phase, s);
  out.pattern_contrast = lerp(own.pattern_contrast, proto.pattern_contrast, s);
  sample_decals(out, config.max_decals, rng);
  return out;
}

Pose sample_pose(Domain domain, int view_index, Rng& rng) {
  Pose p;
  if (domain == Domain::kBhs) {
    // Right-front, top, left-back portal cameras.
    static constexpr double kBase[3] = {-4.0, 0.0, 4.0};
    p.angle = (kBase[std::clamp(view_index, 1, 3) - 1] + rng.uniform(-3.0, 3.0)) * kDegree;
    p.mirrored = view_index == 3;
  } else {
    p.angle = rng.uniform(-8.0, 8.0) * kDegree;
    p.mirrored = view_index >= 3;
  }
  p.scale_x = rng.uniform(0.9, 1.0);
  p.scale_y = rng.uniform(0.9, 1.0);
  p.shift_x = rng.uniform(-0.012, 0.012);
  p.shift_y = rng.uniform(-0.012, 0.012);
  return p;
}

Polygon body_polygon(const IdentitySpec& s, const Pose& pose, int image_size) {
  const double hw = s.width / 2;
  const double hh = s.height / 2;
  const double b = s.bevel * std::min(s.width, s.height);
  const double corners[8][2] = {{-hw + b, -hh}, {hw - b, -hh}, {hw, -hh + b}, {hw, hh - b},
                                {hw - b, hh},   {-hw + b, hh}, {-hw, hh - b}, {-hw, -hh + b}};
  const Transform t(pose, image_size);
  Polygon poly;
  for (const auto& c : corners) {
    double x, y;
    t.forward(c[0], c[1], x, y);
    poly.push_back({std::clamp(static_cast<int>(std::lround(x)), 0, image_size),
                    std::clamp(static_cast<int>(std::lround(y)), 0, image_size)});
  }
  return poly;
}

RenderedView render_view_with_pose(const IdentitySpec& identity, Domain domain,
                                   const Pose& pose, const SynthConfig& config, Rng& rng) {
  const int size = config.image_size;
  RenderedView out;
  out.pose = pose;
  out.image = Image(size, size, 3, 0);
  if (domain == Domain::kBhs) {
    fill_rect(out.image, 0, 0, size, size, Rgb{18, 18, 22});
  } else {
    draw_checkpoint_background(out.image, rng);
  }

  out.mask_polygon = body_polygon(identity, pose, size);
  const auto coverage = rasterize_polygon(out.mask_polygon, size, size);
  const Transform t(pose, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (!coverage[static_cast<std::size_t>(y) * size + x]) continue;
      double u, v;
      t.inverse(x + 0.5, y + 0.5, u, v);
      const Rgb c = shade(identity, u, v);
      out.image.at(x, y, 0) = to_byte(c.r);
      out.image.at(x, y, 1) = to_byte(c.g);
      out.image.at(x, y, 2) = to_byte(c.b);
    }
  }
  if (domain == Domain::kBhs) return out;

  // Checkpoint capture: occlusion, lighting shift, motion blur. Every draw is
  // taken unconditionally so the stream layout does not depend on settings.
  const auto& noise = config.noise;
  const bool occlude = rng.uniform() < noise.occlusion_prob;
  const Rgb occluder_color = random_color(rng, 30.0, 220.0);
  const BBox body = bbox_from_polygon(out.mask_polygon);
  const BBox occ = place_occluder(body, coverage, size, rng);
  if (occlude) {
    fill_rect(out.image, occ.x_min, occ.y_min, occ.x_max, occ.y_max, occluder_color);
    out.occluder = occ;
  }

  const double brightness = 1.0 + noise.color_shift * rng.uniform(-0.3, 0.3);
  double gain[3];
  for (double& g : gain) g = brightness * (1.0 + noise.color_shift * rng.uniform(-0.35, 0.35));
  if (noise.color_shift > 0.0) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        for (int c = 0; c < 3; ++c) out.image.at(x, y, c) = to_byte(out.image.at(x, y, c) * gain[c]);
      }
    }
  }

  const double blur_draw = rng.uniform(0.5, 1.0);
  const int half = static_cast<int>(std::lround(noise.checkpoint_blur * 4.0 * blur_draw));
  motion_blur(out.image, 2 * half + 1);
  return out;
}

RenderedView render_view(const IdentitySpec& identity, Domain domain, int view_index,
                         const SynthConfig& config, Rng& rng) {
  const Pose pose = sample_pose(domain, view_index, rng);
  return render_view_with_pose(identity, domain, pose, config, rng);
}

DatasetManifest generate_dataset(const SynthConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  DatasetManifest manifest;
  manifest.image_root = ".";

  for (int i = 0; i < config.n_identities; ++i) {
    const IdentitySpec identity = sample_identity(config, i);

    auto missing_rng = Rng::substream(config.seed, "synth.missing", static_cast<std::uint64_t>(i));
    std::vector<int> checkpoint_views;
    for (int v = 1; v <= config.checkpoint_views; ++v) {
      if (!missing_rng.bernoulli(config.noise.missing_view_prob)) checkpoint_views.push_back(v);
    }
    if (checkpoint_views.empty()) {
      checkpoint_views.push_back(static_cast<int>(missing_rng.uniform_int(1, config.checkpoint_views)));
    }
    std::vector<std::pair<Domain, int>> shots;
    for (int v = 1; v <= config.bhs_views; ++v) shots.emplace_back(Domain::kBhs, v);
    for (int v : checkpoint_views) shots.emplace_back(Domain::kCheckpoint, v);

    for (const auto& [domain, view] : shots) {
      const std::uint64_t key = static_cast<std::uint64_t>(i) * 16 +
                                (domain == Domain::kBhs ? 0 : 8) + static_cast<std::uint64_t>(view);
      auto rng = Rng::substream(config.seed, "synth.render", key);
      RenderedView rendered = render_view(identity, domain, view, config, rng);

      ImageRecord r;
      r.identity_id = identity.identity_id;
      r.domain = domain;
      r.view_index = view;
      r.image_id = identity.identity_id + "_" + std::string(to_string(domain)) + "_" + std::to_string(view);
      r.image_path = "images/" + identity.identity_id + "/" + std::string(to_string(domain)) + "_" +
                     std::to_string(view) + ".png";
      r.width = config.image_size;
      r.height = config.image_size;
      r.mask_polygon = rendered.mask_polygon;
      r.bbox = bbox_from_polygon(r.mask_polygon);
      r.material = identity.material;
      write_png(out_dir / r.image_path, rendered.image);
      manifest.records.push_back(std::move(r));
    }
  }
  manifest.reindex();
  save_manifest(manifest, out_dir / "manifest.jsonl");
  return manifest;
}

}  // namespace mvb
