#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "mvb/synth.hpp"
#include "test_support.hpp"

namespace mvb {
namespace {

SynthConfig small_config(int n, int size = 64) {
  SynthConfig c;
  c.n_identities = n;
  c.image_size = size;
  c.seed = 21;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

bool same_spec(const IdentitySpec& a, const IdentitySpec& b) {
  auto same_rgb = [](const Rgb& x, const Rgb& y) { return x.r == y.r && x.g == y.g && x.b == y.b; };
  if (a.decals.size() != b.decals.size()) return false;
  for (std::size_t i = 0; i < a.decals.size(); ++i) {
    const auto &da = a.decals[i], &db = b.decals[i];
    if (da.shape != db.shape || da.u != db.u || da.v != db.v || da.half_u != db.half_u ||
        da.half_v != db.half_v || !same_rgb(da.color, db.color)) {
      return false;
    }
  }
  return a.identity_id == b.identity_id && a.material == b.material && same_rgb(a.body, b.body) &&
         same_rgb(a.accent, b.accent) && a.width == b.width && a.height == b.height && a.bevel == b.bevel &&
         a.pattern_period == b.pattern_period && a.pattern_phase == b.pattern_phase &&
         a.pattern_contrast == b.pattern_contrast;
}

double mean_abs_diff(const Image& a, const Image& b) {
  double sum = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) sum += std::abs(int(a.pixels[i]) - int(b.pixels[i]));
  return sum / static_cast<double>(a.pixels.size());
}

TEST(SynthConfig, Validation) {
  SynthConfig c;
  EXPECT_NO_THROW(c.validate());
  c.noise.occlusion_prob = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = SynthConfig{};
  c.checkpoint_views = 5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = SynthConfig{};
  c.n_identities = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Generate, TwoIdentitiesOneViewEach) {
  auto c = small_config(2);
  c.bhs_views = 1;
  c.checkpoint_views = 1;
  c.noise.missing_view_prob = 0;
  testing::TempDir dir("synth");
  const auto m = generate_dataset(c, dir.path());
  EXPECT_EQ(m.records.size(), 4U);
  EXPECT_EQ(m.identity_count(), 2U);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "images" / "00000" / "BHS_1.png"));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "images" / "00001" / "CHECKPOINT_1.png"));
}

TEST(Generate, CountsFollowConfigWithoutMissingViews) {
  auto c = small_config(100, 32);
  c.noise.missing_view_prob = 0;
  testing::TempDir dir("synth");
  const auto m = generate_dataset(c, dir.path());
  const auto stats = validate_manifest(m).statistics;
  EXPECT_EQ(stats.bhs_images, 300U);
  EXPECT_EQ(stats.checkpoint_images, 400U);
  const auto loaded = load_manifest(dir.path() / "manifest.jsonl");
  EXPECT_TRUE(loaded.warnings.empty());
  EXPECT_EQ(loaded.manifest, m);
}

TEST(Generate, MissingViewsKeepAtLeastOnePerDomain) {
  auto c = small_config(40, 32);
  c.noise.missing_view_prob = 0.9;
  testing::TempDir dir("synth");
  const auto m = generate_dataset(c, dir.path());
  const auto report = validate_manifest(m);
  EXPECT_TRUE(report.ok());
  EXPECT_LT(report.statistics.checkpoint_images, 160U);
  for (const auto& counts : testing::identity_counts(m)) {
    EXPECT_EQ(counts.bhs, 3U);
    EXPECT_GE(counts.checkpoint, 1U);
  }
}

TEST(Generate, ByteIdenticalAcrossRuns) {
  const auto c = small_config(6);
  testing::TempDir a("synth_a"), b("synth_b");
  const auto ma = generate_dataset(c, a.path());
  const auto mb = generate_dataset(c, b.path());
  EXPECT_EQ(slurp(a.path() / "manifest.jsonl"), slurp(b.path() / "manifest.jsonl"));
  for (const auto& r : ma.records) {
    EXPECT_EQ(read_png(a.path() / r.image_path), read_png(b.path() / r.image_path)) << r.image_id;
  }
}

TEST(Generate, MaskCoversEnoughAndBBoxInsideImage) {
  auto c = small_config(30, 96);
  testing::TempDir dir("synth");
  for (const auto& r : generate_dataset(c, dir.path()).records) {
    EXPECT_GE(std::abs(polygon_area2(r.mask_polygon)) / 2.0, 0.3 * r.width * r.height) << r.image_id;
    EXPECT_GE(r.bbox.x_min, 0);
    EXPECT_GE(r.bbox.y_min, 0);
    EXPECT_LE(r.bbox.x_max, r.width);
    EXPECT_LE(r.bbox.y_max, r.height);
    EXPECT_EQ(bbox_from_polygon(r.mask_polygon), r.bbox);
  }
}

TEST(Identity, PureFunctionOfSeedAndIndex) {
  auto a = small_config(10);
  auto b = small_config(500);
  b.image_size = 300;
  for (int i = 0; i < 10; ++i) EXPECT_TRUE(same_spec(sample_identity(a, i), sample_identity(b, i)));
  b.seed = a.seed + 1;
  EXPECT_FALSE(same_spec(sample_identity(a, 3), sample_identity(b, 3)));
}

TEST(Identity, DecalCountBounded) {
  auto c = small_config(10);
  for (int i = 0; i < 200; ++i) EXPECT_LE(sample_identity(c, i).decals.size(), 3U);
  c.max_decals = 0;
  for (int i = 0; i < 20; ++i) EXPECT_TRUE(sample_identity(c, i).decals.empty());
}

TEST(Identity, MaterialFrequenciesFollowWeights) {
  auto c = small_config(10);
  c.distractor_similarity = 0;
  std::array<int, 4> counts{};
  const int n = 4000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(sample_identity(c, i).material)];
  const double total = 2767 + 1120 + 198 + 434;
  EXPECT_NEAR(counts[0] / double(n), 2767 / total, 0.03);
  EXPECT_NEAR(counts[1] / double(n), 1120 / total, 0.03);
  EXPECT_NEAR(counts[2] / double(n), 198 / total, 0.02);
  EXPECT_NEAR(counts[3] / double(n), 434 / total, 0.02);
}

TEST(Render, ZeroNoiseCheckpointMatchesBhsOnObject) {
  auto c = small_config(4, 96);
  c.noise = {0.0, 0.0, 0.0, 0.0};
  const auto spec = sample_identity(c, 2);
  Rng pose_rng(3);
  const Pose pose = sample_pose(Domain::kBhs, 1, pose_rng);
  Rng r1(10), r2(11);
  const auto bhs = render_view_with_pose(spec, Domain::kBhs, pose, c, r1);
  const auto cp = render_view_with_pose(spec, Domain::kCheckpoint, pose, c, r2);
  ASSERT_EQ(bhs.mask_polygon, cp.mask_polygon);
  const auto inside = rasterize_polygon(bhs.mask_polygon, c.image_size, c.image_size);
  int compared = 0;
  for (int y = 0; y < c.image_size; ++y) {
    for (int x = 0; x < c.image_size; ++x) {
      if (!inside[static_cast<std::size_t>(y) * c.image_size + x]) continue;
      for (int ch = 0; ch < 3; ++ch) ASSERT_EQ(bhs.image.at(x, y, ch), cp.image.at(x, y, ch));
      ++compared;
    }
  }
  EXPECT_GT(compared, 1000);
  EXPECT_NE(bhs.image, cp.image);  // backgrounds still differ
}

TEST(Render, FullOcclusionProbabilityAlwaysOccludes) {
  auto c = small_config(4, 96);
  c.noise.occlusion_prob = 1.0;
  for (int i = 0; i < 10; ++i) {
    const auto spec = sample_identity(c, i);
    for (int v = 1; v <= 4; ++v) {
      Rng rng(static_cast<std::uint64_t>(100 * i + v));
      const auto view = render_view(spec, Domain::kCheckpoint, v, c, rng);
      ASSERT_TRUE(view.occluder.has_value());
      const auto inside = rasterize_polygon(view.mask_polygon, c.image_size, c.image_size);
      int object = 0, covered = 0;
      for (int y = 0; y < c.image_size; ++y) {
        for (int x = 0; x < c.image_size; ++x) {
          if (!inside[static_cast<std::size_t>(y) * c.image_size + x]) continue;
          ++object;
          const auto& o = *view.occluder;
          if (x >= o.x_min && x < o.x_max && y >= o.y_min && y < o.y_max) ++covered;
        }
      }
      EXPECT_GT(covered, 0);
      EXPECT_LE(covered, object / 2);
    }
  }
  // BHS views are never occluded.
  Rng rng(5);
  EXPECT_FALSE(render_view(sample_identity(c, 0), Domain::kBhs, 1, c, rng).occluder.has_value());
}

TEST(Render, FullSimilarityWithoutDecalsIsPixelIdentical) {
  auto c = small_config(4, 96);
  c.distractor_similarity = 1.0;
  c.max_decals = 0;
  Rng pose_rng(1);
  const Pose pose = sample_pose(Domain::kBhs, 2, pose_rng);
  Rng ra(7), rb(7);
  const auto a = render_view_with_pose(sample_identity(c, 0), Domain::kBhs, pose, c, ra);
  const auto b = render_view_with_pose(sample_identity(c, 1), Domain::kBhs, pose, c, rb);
  EXPECT_EQ(a.image, b.image);
  c.distractor_similarity = 0.0;
  Rng rc(7), rd(7);
  EXPECT_NE(render_view_with_pose(sample_identity(c, 0), Domain::kBhs, pose, c, rc).image,
            render_view_with_pose(sample_identity(c, 1), Domain::kBhs, pose, c, rd).image);
}

TEST(Render, SimilarityReducesInterIdentityDistance) {
  double previous = 1e9;
  for (const double s : {0.0, 0.5, 1.0}) {
    auto c = small_config(60, 64);
    c.distractor_similarity = s;
    Rng pose_rng(1);
    const Pose pose = sample_pose(Domain::kBhs, 2, pose_rng);
    std::vector<Image> renders;
    for (int i = 0; i < 60; ++i) {
      Rng rng(99);
      renders.push_back(render_view_with_pose(sample_identity(c, i), Domain::kBhs, pose, c, rng).image);
    }
    double total = 0;
    int pairs = 0;
    for (std::size_t i = 0; i < renders.size(); ++i) {
      for (std::size_t j = i + 1; j < renders.size(); ++j, ++pairs) total += mean_abs_diff(renders[i], renders[j]);
    }
    const double mean = total / pairs;
    EXPECT_LT(mean, previous) << "similarity " << s;
    previous = mean;
  }
}

}  // namespace
}  // namespace mvb
