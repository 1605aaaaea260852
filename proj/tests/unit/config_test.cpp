#include <gtest/gtest.h>

#include "mvb/config.hpp"

namespace mvb {
namespace {

TEST(Config, RunConfigRoundTrip) {
  RunConfig c = profile_defaults("desk");
  c.network.variant = nets::Variant::kBasic;
  c.network.use_se = true;
  c.network.merge_point = nets::MergePoint::kBeforePool5;
  c.network.bn_stages = {3, 5};
  c.train.mining = MiningConfig{true, 3, 50, 0.6, 2.5};
  c.train.pairing = PairingMode::kAll;
  c.train.preprocess.use_mask = true;
  c.train.seed = 1234567890123ULL;
  EXPECT_EQ(run_config_from_json(to_json(c)), c);
  EXPECT_EQ(run_config_from_json(Json::parse(to_json(c).dump())), c);
}

TEST(Config, SynthRoundTrip) {
  SynthConfig s;
  s.noise.occlusion_prob = 0.1;
  s.material_weights = {1, 2, 3, 4};
  s.seed = 99;
  EXPECT_EQ(synth_config_from_json(to_json(s)), s);
}

TEST(Config, MissingKeysKeepDefaults) {
  const auto c = train_config_from_json(Json::parse(R"({"iterations": 7})"));
  EXPECT_EQ(c.iterations, 7);
  EXPECT_EQ(c.batch_pairs, TrainConfig{}.batch_pairs);
}

TEST(Config, UnknownKeysAreRejected) {
  EXPECT_THROW(train_config_from_json(Json::parse(R"({"iteration": 7})")), ConfigError);
  EXPECT_THROW(network_config_from_json(Json::parse(R"({"variant": "MERGED", "dropout": 0.5})")), ConfigError);
  EXPECT_THROW(run_config_from_json(Json::parse(R"({"eval": {}})")), ConfigError);
  EXPECT_THROW(network_config_from_json(Json::parse(R"({"variant": "TRIPLET"})")), ConfigError);
}

TEST(Config, Profiles) {
  const auto desk = profile_defaults("desk");
  EXPECT_DOUBLE_EQ(desk.network.backbone_scale, 0.25);
  EXPECT_EQ(desk.network.input_size, desk.train.preprocess.crop_to);
  const auto full = profile_defaults("full");
  EXPECT_EQ(full.train.iterations, 50000);
  EXPECT_EQ(full.train.batch_pairs, 128);
  EXPECT_DOUBLE_EQ(full.network.backbone_scale, 1.0);
  EXPECT_EQ(full.network.input_size, 224);
  EXPECT_EQ(full.train.preprocess.resize_to, 256);
  EXPECT_THROW(profile_defaults("laptop"), ConfigError);
}

TEST(Overrides, ParseJsonValuesWithStringFallback) {
  Json doc = to_json(profile_defaults("desk"));
  apply_overrides(doc, {"train.iterations=12", "network.use_se=true", "train.pairing=ALL",
                        "network.head_widths=[8,4]", "train.mining.threshold=0.25"});
  const auto c = run_config_from_json(doc);
  EXPECT_EQ(c.train.iterations, 12);
  EXPECT_TRUE(c.network.use_se);
  EXPECT_EQ(c.train.pairing, PairingMode::kAll);
  EXPECT_EQ(c.network.head_widths, (std::vector<int>{8, 4}));
  EXPECT_DOUBLE_EQ(c.train.mining.threshold, 0.25);
}

TEST(Overrides, RejectUnknownKeysAndMalformedAssignments) {
  Json doc = to_json(profile_defaults("desk"));
  EXPECT_THROW(apply_override(doc, "train.iters=3"), ConfigError);
  EXPECT_THROW(apply_override(doc, "train.iterations"), ConfigError);
  EXPECT_THROW(apply_override(doc, "=3"), ConfigError);
  EXPECT_THROW(apply_override(doc, "train.iterations.x=3"), ConfigError);
}

}  // namespace
}  // namespace mvb
