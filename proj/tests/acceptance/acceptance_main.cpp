// Acceptance suite: one PASS/FAIL line per criterion. Tolerances and budgets
// are fixed below. Exit status is non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "eval_oracle.hpp"
#include "gradcheck.hpp"
#include "mvb/ablation.hpp"
#include "mvb/cli.hpp"
#include "mvb/eval.hpp"
#include "mvb/image.hpp"
#include "mvb/model.hpp"
#include "mvb/pairs.hpp"
#include "mvb/preprocess.hpp"
#include "mvb/synth.hpp"
#include "mvb/train.hpp"
#include "test_support.hpp"

namespace mvb {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

// Criterion settings.
constexpr int kCmcCases = 1000;
constexpr int kCmcMaxIdentities = 50;
constexpr double kCmcTimeBudgetSeconds = 60.0;
constexpr int kAggregationCases = 10000;
constexpr int kPairManifests = 100;
// Smaller manifests may hold fewer than twice as many negatives as positives.
constexpr int kPairMinIdentities = 10;
constexpr double kTargetRatio = 2.0;
constexpr double kRatioTolerance = 0.02;  // relative
constexpr int kMaskPolygons = 100;
constexpr int kFrozenSteps = 10;
constexpr int kGradInstances = 50;
constexpr double kGradTolerance = 1e-4;
constexpr int kZeroMapInputs = 20;

// End-to-end learning signal.
constexpr int kE2eIdentities = 150;
constexpr int kE2eTestIdentities = 50;
constexpr int kE2eImageSize = 128;
constexpr double kE2eDistractorSimilarity = 0.2;
constexpr int kE2eIterations = 600;
constexpr int kE2eBatchPairs = 16;
constexpr double kE2eLearningRate = 0.01;
constexpr double kE2eChanceMultiple = 10.0;
constexpr std::uint64_t kE2eSeed = 7;

// Ablation harness.
constexpr int kAblationIdentities = 12;
constexpr int kAblationTestIdentities = 4;
constexpr int kAblationIterations = 30;
constexpr double kAblationRowBudgetSeconds = 300.0;
// Batches of 8 diverge at 0.01 for the distance variant within 20 steps.
constexpr double kAblationLearningRate = 0.003;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

nets::NetworkConfig desk_network(nets::Variant variant) {
  nets::NetworkConfig c;
  c.variant = variant;
  c.backbone_scale = 0.25;
  c.input_size = 64;
  return c;
}

PreprocessConfig desk_preprocess() { return PreprocessConfig{false, 72, 64, true}; }

/// Flat colour per identity plus mild per-image noise; used where only the
/// optimizer mechanics matter.
Image colour_image(const ImageRecord& r) {
  Image img(r.width, r.height);
  const auto id_hash = stable_hash(r.identity_id);
  Rng rng(stable_hash(r.image_id));
  for (auto& px : img.pixels) px = static_cast<std::uint8_t>(rng.uniform_int(0, 20));
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) img.at(x, y, c) += static_cast<std::uint8_t>((id_hash >> (8 * c)) % 200);
    }
  }
  return img;
}

// ---------------------------------------------------------------------------

Outcome cmc_oracle() {
  const auto start = Clock::now();
  auto rng = Rng::substream(101, "acceptance.cmc");
  int mismatches = 0;
  std::size_t max_gallery = 0;
  for (int t = 0; t < kCmcCases; ++t) {
    const auto c = testing::random_score_case(rng, kCmcMaxIdentities);
    std::size_t gallery = 0;
    for (const auto& r : c.test.records) gallery += r.domain == Domain::kBhs;
    max_gallery = std::max(max_gallery, gallery);
    testing::TableModel model(c);
    const auto got = evaluate(model, c.test).report.values;
    if (got != testing::oracle_cmc(c, {1, 2, 3})) ++mismatches;
  }
  const double secs = seconds_since(start);
  return {mismatches == 0 && secs < kCmcTimeBudgetSeconds && max_gallery <= 200,
          std::to_string(kCmcCases) + " matrices, " + std::to_string(mismatches) + " mismatches, largest gallery " +
              std::to_string(max_gallery) + " images, " + fmt("%.1f s", secs)};
}

Outcome aggregation_exact() {
  auto rng = Rng::substream(102, "acceptance.aggregation");
  int bad = 0;
  for (int t = 0; t < kAggregationCases; ++t) {
    std::vector<double> s(static_cast<std::size_t>(rng.uniform_int(1, 8)));
    for (auto& v : s) v = rng.uniform(0.0, 5.0);
    const auto kind = t % 2 ? ScoreKind::kDistance : ScoreKind::kProbability;
    auto sorted = s;
    if (kind == ScoreKind::kDistance) {
      std::sort(sorted.begin(), sorted.end());
    } else {
      std::sort(sorted.begin(), sorted.end(), std::greater<>());
    }
    const double expected = sorted.size() == 1 ? sorted[0] : (sorted[0] + sorted[1]) / 2;
    if (aggregate_identity(s, kind) != expected) ++bad;
  }
  return {bad == 0, std::to_string(kAggregationCases) + " lists, " + std::to_string(bad) + " inexact"};
}

class ConstantModel : public SimilarityModel {
 public:
  ScoreKind kind() const override { return ScoreKind::kProbability; }
  std::vector<std::vector<double>> score(std::span<const ImageRecord* const> probes,
                                         std::span<const ImageRecord* const> gallery) override {
    return std::vector<std::vector<double>>(probes.size(), std::vector<double>(gallery.size(), 0.9));
  }
  double same_probability(double s) const override { return s; }
};

Outcome pair_combinatorics() {
  auto rng = Rng::substream(103, "acceptance.pairs");
  int count_errors = 0, base_errors = 0, ratio_errors = 0;
  double worst_ratio_error = 0;
  for (int t = 0; t < kPairManifests; ++t) {
    const auto m = testing::random_manifest(rng, static_cast<int>(rng.uniform_int(kPairMinIdentities, 40)));
    std::size_t cross = 0, all = 0;
    for (const auto& c : testing::identity_counts(m)) {
      cross += c.checkpoint * c.bhs;
      const auto n = c.checkpoint + c.bhs;
      all += n * (n - 1) / 2;
    }
    count_errors += build_positive_pairs(m, PairingMode::kCrossDomain).size() != cross;
    count_errors += build_positive_pairs(m, PairingMode::kAll).size() != all;

    auto base = build_base_pair_set(m, PairingMode::kCrossDomain, static_cast<std::uint64_t>(t));
    const auto base_all = build_base_pair_set(m, PairingMode::kAll, static_cast<std::uint64_t>(t));
    base_errors += base.positives() != base.negatives() || base.has_duplicates();
    base_errors += base_all.positives() != base_all.negatives() || base_all.has_duplicates();

    ConstantModel model;
    const auto mined = mine_hard_negatives(model, m, MiningConfig{true, 2, 300, 0.5, kTargetRatio}, base,
                                           static_cast<std::uint64_t>(t));
    for (const auto& s : mined.mined) base.samples.push_back(s);
    const double err = std::abs(base.negatives_per_positive() - kTargetRatio) / kTargetRatio;
    worst_ratio_error = std::max(worst_ratio_error, err);
    ratio_errors += err > kRatioTolerance || base.has_duplicates();
  }
  return {count_errors == 0 && base_errors == 0 && ratio_errors == 0,
          std::to_string(kPairManifests) + " manifests; count mismatches " + std::to_string(count_errors) +
              ", unbalanced base sets " + std::to_string(base_errors) + ", worst augmented ratio error " +
              fmt("%.2f%%", 100 * worst_ratio_error)};
}

Outcome mask_invariant() {
  auto rng = Rng::substream(104, "acceptance.mask");
  int wrong_pixels = 0, not_idempotent = 0;
  for (int t = 0; t < kMaskPolygons; ++t) {
    const int w = static_cast<int>(rng.uniform_int(8, 64));
    const int h = static_cast<int>(rng.uniform_int(8, 64));
    Image img(w, h);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(1, 255));
    const auto poly = testing::random_polygon(rng, w, h);
    const auto masked = apply_mask(img, poly);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const bool inside = testing::pixel_inside(poly, x, y);
        for (int c = 0; c < 3; ++c) wrong_pixels += masked.at(x, y, c) != (inside ? img.at(x, y, c) : 0);
      }
    }
    not_idempotent += !(apply_mask(masked, poly) == masked);
  }
  return {wrong_pixels == 0 && not_idempotent == 0,
          std::to_string(kMaskPolygons) + " polygons; " + std::to_string(wrong_pixels) + " wrong channel values, " +
              std::to_string(not_idempotent) + " non-idempotent"};
}

Outcome parameter_sharing() {
  const auto net_cfg = desk_network(nets::Variant::kMerged);
  nets::SiameseNetwork fresh(net_cfg, 11);
  int violations = 0;
  std::size_t shared = 0, per_branch = 0;
  std::map<const nets::Parameter*, nets::ParamScope> scope;
  for (const auto& e : fresh.state().entries()) scope[e.storage] = e.scope;
  const auto probe = fresh.referenced_by(nets::Branch::kProbe);
  const auto gallery = fresh.referenced_by(nets::Branch::kGallery);
  const std::set<const nets::Parameter*> gset(gallery.begin(), gallery.end());
  for (const auto* p : probe) {
    if (p->is_batchnorm()) {
      const auto* twin = fresh.state().find(p->name, nets::ParamScope::kGallery);
      violations += twin == nullptr || twin == p || gset.contains(p) || scope.at(p) != nets::ParamScope::kProbe ||
                    !(p->stage == 4 || p->stage == 5);
      ++per_branch;
    } else {
      violations += !gset.contains(p) || scope.at(p) != nets::ParamScope::kShared;
      ++shared;
    }
  }

  auto rng = Rng::substream(105, "acceptance.sharing");
  const auto manifest = testing::random_manifest(rng, 6, 80);
  TrainConfig cfg;
  cfg.iterations = kFrozenSteps;
  cfg.batch_pairs = 8;
  cfg.learning_rate = 0.01;
  cfg.seed = 11;
  cfg.preprocess = desk_preprocess();
  const auto trained = train(net_cfg, manifest, colour_image, cfg);
  int frozen_changed = 0, trainable_changed = 0;
  const auto before = fresh.state().entries();
  const auto after = trained.network.state().entries();
  for (std::size_t i = 0; i < before.size(); ++i) {
    const bool same = before[i].storage->value == after[i].storage->value;
    if (before[i].storage->stage == 1 || before[i].storage->stage == 2) {
      frozen_changed += !same;
    } else {
      trainable_changed += !same;
    }
  }
  return {violations == 0 && per_branch > 0 && frozen_changed == 0 && trainable_changed > 0,
          std::to_string(shared) + " shared tensors, " + std::to_string(per_branch) +
              " per-branch BN tensors, " + std::to_string(violations) + " violations; after " +
              std::to_string(kFrozenSteps) + " steps " + std::to_string(frozen_changed) + " frozen tensors changed, " +
              std::to_string(trainable_changed) + " trainable tensors moved"};
}

Outcome gradient_checks() {
  auto rng = Rng::substream(106, "acceptance.gradients");
  double worst = 0;
  std::string worst_layer;
  int failures = 0;
  for (int i = 0; i < kGradInstances; ++i) {
    for (const auto& check : {testing::check_contrastive_gradients(rng), testing::check_cross_entropy_gradients(rng),
                              testing::check_se_gradients(rng)}) {
      if (check.max_rel_error > worst) {
        worst = check.max_rel_error;
        worst_layer = check.layer;
      }
      failures += !(check.max_rel_error < kGradTolerance);
    }
  }
  return {failures == 0, std::to_string(kGradInstances) + " instances each of contrastive, cross-entropy, SE; worst " +
                             fmt("%.2e", worst) + " (" + worst_layer + ")"};
}

Outcome zero_map() {
  auto cfg = desk_network(nets::Variant::kMerged);
  cfg.bn_stages.clear();
  nets::SiameseNetwork net(cfg, 12);
  auto rng = Rng::substream(107, "acceptance.zero_map");
  // Random head biases so the constant is not simply 0.5.
  for (const auto* p : net.head_parameters()) {
    if (p->role != nets::ParamRole::kFcBias) continue;
    for (auto& v : net.state().find(p->name, nets::ParamScope::kShared)->value) v = static_cast<float>(rng.normal());
  }
  nets::Tensor x(kZeroMapInputs, cfg.input_size, cfg.input_size, 3);
  for (auto& v : x.data) v = static_cast<float>(rng.normal());
  const auto p = net.merged_forward(x, x);
  const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
  return {*lo == *hi && *lo > 0.0F && *lo < 1.0F,
          std::to_string(kZeroMapInputs) + " inputs, probabilities in [" + fmt("%.9f", *lo) + ", " +
              fmt("%.9f", *hi) + "]"};
}

Outcome end_to_end() {
  testing::TempDir dir("acceptance_e2e");
  SynthConfig synth;
  synth.n_identities = kE2eIdentities;
  synth.image_size = kE2eImageSize;
  synth.distractor_similarity = kE2eDistractorSimilarity;
  synth.seed = kE2eSeed;
  const auto manifest = generate_dataset(synth, dir.path());
  const auto [train_set, test_set] = split_train_test(manifest, kE2eTestIdentities, kE2eSeed);

  TrainConfig cfg;
  cfg.iterations = kE2eIterations;
  cfg.batch_pairs = kE2eBatchPairs;
  cfg.learning_rate = kE2eLearningRate;
  cfg.seed = kE2eSeed;
  cfg.preprocess = desk_preprocess();
  PreprocessConfig eval_prep = cfg.preprocess;
  eval_prep.train_mode = false;

  std::map<nets::Variant, double> rank1;
  std::ostringstream detail;
  const auto start = Clock::now();
  for (const auto variant : {nets::Variant::kMerged, nets::Variant::kBasic}) {
    const auto result = train(desk_network(variant), train_set, dir.path(), cfg);
    PreparedImageCache images(dir.path(), eval_prep);
    NetworkModel model(result.network, images, cfg.margin);
    const auto report = evaluate(model, test_set).report;
    rank1[variant] = report.at(1);
    detail << (variant == nets::Variant::kMerged ? "merged" : "basic") << " CMC@1/2/3 "
           << fmt("%.1f", 100 * report.at(1)) << "/" << fmt("%.1f", 100 * report.at(2)) << "/"
           << fmt("%.1f", 100 * report.at(3)) << "%; ";
  }
  const double chance = 1.0 / static_cast<double>(test_set.identity_count());
  const double threshold = kE2eChanceMultiple * chance;
  const bool above_chance = rank1[nets::Variant::kMerged] >= threshold;
  const bool merged_wins = rank1[nets::Variant::kMerged] >= rank1[nets::Variant::kBasic];
  detail << "threshold " << fmt("%.1f", 100 * threshold) << "%, " << fmt("%.0f s", seconds_since(start));
  return {above_chance && merged_wins, detail.str()};
}

Outcome ablation_harness() {
  testing::TempDir dir("acceptance_ablation");
  SynthConfig synth;
  synth.n_identities = kAblationIdentities;
  synth.image_size = 80;
  synth.seed = 21;
  const auto manifest = generate_dataset(synth, dir.path());
  const auto [train_set, test_set] = split_train_test(manifest, kAblationTestIdentities, 21);

  TrainConfig base_train;
  base_train.iterations = kAblationIterations;
  base_train.batch_pairs = 8;
  base_train.learning_rate = kAblationLearningRate;
  base_train.seed = 21;
  base_train.preprocess = desk_preprocess();
  base_train.mining.base_epochs = 1;
  base_train.mining.threshold = 0.0;
  const fs::path image_dir = dir.path();
  AblationData data{&train_set, &test_set, [image_dir](const ImageRecord& r) { return read_png(image_dir / r.image_path); }};

  const auto grid = default_grid();
  const auto report = run_ablation(grid, desk_network(nets::Variant::kMerged), base_train, data);
  bool ok = report.rows.size() == 10;
  double slowest = 0;
  std::set<std::string> names;
  std::string first_error;
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& r = report.rows[i];
    const bool row_ok = r.row == grid[i] && r.report && r.report->values.size() == 3 &&
                        r.seconds <= kAblationRowBudgetSeconds;
    if (!row_ok && first_error.empty()) first_error = "; row " + r.row.name() + " bad: " + r.error;
    ok &= row_ok;
    names.insert(r.row.name());
    slowest = std::max(slowest, r.seconds);
  }
  ok &= names.size() == 10;
  const std::string table = render_table(report);
  const bool table_ok = table.find("Merged") != std::string::npos && table.find("Rank3(%)") != std::string::npos;
  if (!table_ok) first_error += "; table header missing";
  return {ok && table_ok, std::to_string(report.rows.size()) + " rows, " + std::to_string(names.size()) +
                              " distinct configurations, slowest row " + fmt("%.1f s", slowest) + first_error};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  testing::TempDir dir("acceptance_determinism");
  auto pipeline = [&](const std::string& tag) {
    const auto root = dir.path() / tag;
    const auto data = (root / "data").string();
    const auto run_dir = (root / "run").string();
    std::ostringstream out, err;
    const std::vector<std::vector<std::string>> steps{
        {"generate", "--identities", "10", "--test-identities", "4", "--image-size", "64", "--seed", "5", "--out", data},
        {"pairs", "--data", data, "--seed", "5", "--out", (root / "pairs.tsv").string()},
        {"train", "--data", data, "--out", run_dir, "--seed", "5", "--iterations", "8", "--batch-pairs", "4", "--ats",
         "--set", "train.mining.base_epochs=1", "--set", "network.backbone_scale=0.125", "--log-every", "0"},
        {"eval", "--checkpoint", run_dir + "/checkpoint.mvbckpt", "--data", data}};
    for (const auto& s : steps) {
      if (cli::run(s, out, err) != cli::kExitOk) throw std::runtime_error("pipeline step failed: " + err.str());
    }
    return root;
  };
  const auto a = pipeline("a");
  const auto b = pipeline("b");
  int differences = 0;
  std::vector<fs::path> compared;
  for (const fs::path rel : {"data/manifest.jsonl", "data/train/manifest.jsonl", "data/test/manifest.jsonl",
                             "pairs.tsv", "run/pairs.tsv", "run/checkpoint.mvbckpt", "run/train_log.jsonl",
                             "run/eval/report.json", "run/eval/scores.tsv"}) {
    differences += slurp(a / rel) != slurp(b / rel) || slurp(a / rel).empty();
    compared.push_back(rel);
  }
  for (const auto& entry : fs::recursive_directory_iterator(a / "data" / "images")) {
    if (!entry.is_regular_file()) continue;
    differences += slurp(entry.path()) != slurp(b / fs::relative(entry.path(), a));
  }
  return {differences == 0, "two seeded pipeline runs, " + std::to_string(compared.size()) +
                                " artifacts plus all images compared, " + std::to_string(differences) + " differ"};
}

}  // namespace
}  // namespace mvb

int main(int argc, char** argv) {
  // Optional arguments select criteria by name; the default runs all.
  const std::set<std::string> only(argv + 1, argv + argc);
  using Criterion = std::pair<const char*, std::function<mvb::Outcome()>>;
  const std::vector<Criterion> criteria{
      {"cmc_oracle", mvb::cmc_oracle},
      {"aggregation_exact", mvb::aggregation_exact},
      {"pair_combinatorics", mvb::pair_combinatorics},
      {"mask_invariant", mvb::mask_invariant},
      {"parameter_sharing", mvb::parameter_sharing},
      {"gradient_checks", mvb::gradient_checks},
      {"zero_map", mvb::zero_map},
      {"end_to_end", mvb::end_to_end},
      {"ablation_harness", mvb::ablation_harness},
      {"determinism", mvb::determinism},
  };
  int failed = 0;
  int ran = 0;
  for (const auto& [name, check] : criteria) {
    if (!only.empty() && !only.contains(name)) continue;
    ++ran;
    mvb::Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS  " : "FAIL  ") << name << "  " << o.detail << std::endl;
  }
  std::cout << (ran - failed) << "/" << ran << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
