#include <gtest/gtest.h>

#include <fstream>

#include "mvb/nets/checkpoint.hpp"
#include "mvb/rng.hpp"
#include "test_support.hpp"

namespace mvb::nets {
namespace {

NetworkConfig tiny(Variant variant, bool se) {
  NetworkConfig c;
  c.variant = variant;
  c.use_se = se;
  c.backbone_scale = 0.0625;
  c.input_size = 32;
  c.head_widths = {16};
  c.embedding_width = 8;
  return c;
}

Tensor random_images(Rng& rng, int n) {
  Tensor t(n, 32, 32, 3);
  for (auto& v : t.data) v = static_cast<float>(rng.normal());
  return t;
}

TEST(Checkpoint, RoundTripReproducesOutputsExactly) {
  testing::TempDir dir("ckpt");
  Rng rng(1);
  for (const auto variant : {Variant::kMerged, Variant::kBasic}) {
    SiameseNetwork net(tiny(variant, variant == Variant::kMerged), 11);
    // Diverge the branches' BN statistics so per-branch state must survive.
    for (auto& v : net.state().find("conv4_1.bn.running_mean", ParamScope::kProbe)->value) v = 0.25F;
    const auto path = dir.path() / "net.mvbckpt";
    save_checkpoint(net, path, {{"note", "x"}});
    auto loaded = load_checkpoint(path);
    EXPECT_EQ(loaded.metadata["note"], "x");
    EXPECT_EQ(loaded.network.config(), net.config());
    const auto p = random_images(rng, 2), g = random_images(rng, 2);
    if (variant == Variant::kMerged) {
      EXPECT_EQ(loaded.network.merged_forward(p, g), net.merged_forward(p, g));
    } else {
      EXPECT_EQ(loaded.network.basic_forward(p, g).distances, net.basic_forward(p, g).distances);
    }
    const auto a = net.state().entries(), b = loaded.network.state().entries();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].name, b[i].name);
      EXPECT_EQ(a[i].scope, b[i].scope);
      EXPECT_EQ(a[i].storage->value, b[i].storage->value);
    }
  }
}

TEST(Checkpoint, HeaderListsEveryTensorWithScope) {
  testing::TempDir dir("ckpt");
  SiameseNetwork net(tiny(Variant::kMerged, false));
  save_checkpoint(net, dir.path() / "a.mvbckpt");
  const auto header = read_checkpoint_header(dir.path() / "a.mvbckpt");
  EXPECT_EQ(header["entries"].size(), net.state().entries().size());
  std::size_t total = 0;
  for (const auto& e : header["entries"]) {
    const std::string scope = e["scope"];
    EXPECT_TRUE(scope == "shared" || scope == "probe" || scope == "gallery");
    EXPECT_EQ(e["offset"].get<std::size_t>(), total);
    total += e["count"].get<std::size_t>();
  }
  EXPECT_EQ(header["total_values"].get<std::size_t>(), total);
}

TEST(Checkpoint, RejectsForeignAndTruncatedFiles) {
  testing::TempDir dir("ckpt");
  {
    std::ofstream out(dir.path() / "bad.mvbckpt", std::ios::binary);
    out << "not a checkpoint at all";
  }
  EXPECT_THROW(load_checkpoint(dir.path() / "bad.mvbckpt"), CheckpointError);
  EXPECT_THROW(load_checkpoint(dir.path() / "missing.mvbckpt"), CheckpointError);

  SiameseNetwork net(tiny(Variant::kBasic, false));
  const auto path = dir.path() / "t.mvbckpt";
  save_checkpoint(net, path);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 16);
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
}

}  // namespace
}  // namespace mvb::nets
