#include "mvb/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "mvb/ablation.hpp"
#include "mvb/config.hpp"
#include "mvb/data_model.hpp"
#include "mvb/eval.hpp"
#include "mvb/image.hpp"
#include "mvb/model.hpp"
#include "mvb/nets/checkpoint.hpp"
#include "mvb/nets/losses.hpp"
#include "mvb/pairs.hpp"
#include "mvb/synth.hpp"
#include "mvb/train.hpp"

#ifndef MVB_VERSION
#define MVB_VERSION "0.0.0"
#endif

namespace mvb::cli {

namespace fs = std::filesystem;

std::string version() { return MVB_VERSION; }

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::uint64_t seed = 0;
  std::vector<std::string> overrides;
  std::string config_file;
  std::string profile = "desk";
};

struct Options {
  Common common;
  std::optional<std::string> data;
  std::string out;
  std::string checkpoint;
  std::string pairs_file;
  std::string plot;
  std::string input;
  std::string grid = "default";
  std::string mode = "CROSS_DOMAIN";

  // generate
  int identities = 100;
  std::optional<int> test_identities;
  std::optional<int> image_size;
  std::optional<double> distractor_similarity;

  // train
  std::optional<std::string> variant;
  bool se = false;
  bool mask = false;
  bool ats = false;
  std::optional<int> iterations;
  std::optional<int> batch_pairs;
  std::optional<double> lr;
  int log_every = 50;
};

fs::path data_root(const Options& o) {
  if (o.data) return *o.data;
  if (const char* env = std::getenv(kDataRootEnv); env != nullptr && *env != '\0') return env;
  throw UsageError(std::string("no dataset given: pass --data or set ") + kDataRootEnv);
}

/// A manifest file, or a dataset directory holding <split>/manifest.jsonl or
/// manifest.jsonl.
fs::path manifest_path(const fs::path& root, std::string_view split) {
  if (fs::is_regular_file(root)) return root;
  if (fs::is_regular_file(root / split / "manifest.jsonl")) return root / split / "manifest.jsonl";
  if (fs::is_regular_file(root / "manifest.jsonl")) return root / "manifest.jsonl";
  throw ManifestError("no manifest found under " + root.string());
}

LoadedManifest load_split(const Options& o, std::string_view split, std::ostream& err) {
  auto loaded = load_manifest(manifest_path(data_root(o), split));
  for (const auto& w : loaded.warnings) err << "warning: " << w << '\n';
  return loaded;
}

Json load_run_config(const Options& o, bool with_train_flags) {
  Json doc = to_json(profile_defaults(o.common.profile));
  if (!o.common.config_file.empty()) {
    std::ifstream in(o.common.config_file);
    if (!in) throw UsageError("cannot open config file " + o.common.config_file);
    Json patch = Json::parse(in, nullptr, false);
    if (patch.is_discarded() || !patch.is_object()) throw ConfigError("config file is not a JSON object");
    doc.merge_patch(patch);
  }
  doc["train"]["seed"] = o.common.seed;
  if (with_train_flags) {
    if (o.variant) {
      std::string v = *o.variant;
      std::transform(v.begin(), v.end(), v.begin(), ::toupper);
      doc["network"]["variant"] = v;
    }
    if (o.se) doc["network"]["use_se"] = true;
    if (o.mask) doc["train"]["preprocess"]["use_mask"] = true;
    if (o.ats) doc["train"]["mining"]["enabled"] = true;
    if (o.iterations) doc["train"]["iterations"] = *o.iterations;
    if (o.batch_pairs) doc["train"]["batch_pairs"] = *o.batch_pairs;
    if (o.lr) doc["train"]["learning_rate"] = *o.lr;
  }
  apply_overrides(doc, o.common.overrides);
  const RunConfig parsed = run_config_from_json(doc);
  parsed.network.validate();
  parsed.train.validate();
  return doc;
}

void write_json(const fs::path& path, const Json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_provenance(const fs::path& dir, const std::string& command, const std::vector<std::string>& args,
                      const Options& o, const Json& config) {
  Json p{{"command", command},
         {"argv", args},
         {"seed", o.common.seed},
         {"version", version()},
         {"config", config}};
  write_json(dir / "provenance.json", p);
}

fs::path require_out(const Options& o) {
  if (o.out.empty()) throw UsageError("--out is required");
  return o.out;
}

// ---------------------------------------------------------------------------

int cmd_generate(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  Json doc = to_json(SynthConfig{});
  doc["n_identities"] = o.identities;
  doc["seed"] = o.common.seed;
  if (o.image_size) doc["image_size"] = *o.image_size;
  if (o.distractor_similarity) doc["distractor_similarity"] = *o.distractor_similarity;
  std::vector<std::string> synth_overrides;
  for (const auto& a : o.common.overrides) {
    if (!a.starts_with("synth.")) throw ConfigError("generate accepts only synth.* overrides, got '" + a + "'");
    synth_overrides.push_back(a.substr(6));
  }
  apply_overrides(doc, synth_overrides);
  const SynthConfig config = synth_config_from_json(doc);
  config.validate();
  const int n_test = o.test_identities.value_or(config.n_identities / 3);
  if (n_test < 0 || n_test >= config.n_identities) {
    throw UsageError("--test-identities must be in [0, identities)");
  }

  const fs::path dir = require_out(o);
  const auto manifest = generate_dataset(config, dir);
  auto [train, test] = split_train_test(manifest, static_cast<std::size_t>(n_test), o.common.seed);
  train.image_root = "..";
  test.image_root = "..";
  save_manifest(train, dir / "train" / "manifest.jsonl");
  save_manifest(test, dir / "test" / "manifest.jsonl");

  const auto report = validate_manifest(manifest);
  out << report.render_statistics();
  out << "identities: " << train.identities.size() << " train, " << test.identities.size() << " test\n";
  out << "wrote " << manifest.records.size() << " images to " << dir.string() << '\n';
  write_provenance(dir, "generate", args, o, {{"synth", doc}, {"test_identities", n_test}});
  return kExitOk;
}

int cmd_pairs(const Options& o, const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (!o.common.overrides.empty()) throw ConfigError("pairs takes no --set overrides");
  const auto loaded = load_split(o, "train", err);
  const PairingMode mode = parse_pairing_mode(o.mode);
  const auto set = build_base_pair_set(loaded.manifest, mode, o.common.seed);
  const fs::path path = require_out(o);
  save_pair_set(set, path);
  out << set.positives() << " positive, " << set.negatives() << " negative pairs -> " << path.string() << '\n';
  write_provenance(path.parent_path().empty() ? fs::path(".") : path.parent_path(), "pairs", args, o,
                   {{"mode", to_string(mode)}});
  return kExitOk;
}

int cmd_train(const Options& o, const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const Json doc = load_run_config(o, true);
  const RunConfig rc = run_config_from_json(doc);
  const auto loaded = load_split(o, "train", err);
  const fs::path dir = require_out(o);
  fs::create_directories(dir);

  const auto start = std::chrono::steady_clock::now();
  auto result = train(rc.network, loaded.manifest, loaded.image_dir, rc.train, [&](const TrainLogEntry& e) {
    if (o.log_every > 0 && (e.iteration % o.log_every == 0 || e.iteration == 1)) {
      err << "iter " << e.iteration << " epoch " << e.epoch << " phase " << e.phase << " loss " << e.loss
          << " lr " << e.learning_rate << '\n';
    }
  });
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (result.mining) {
    for (const auto& w : result.mining->warnings) err << "warning: " << w << '\n';
  }

  nets::save_checkpoint(result.network, dir / "checkpoint.mvbckpt",
                        {{"train", doc["train"]}, {"iterations", rc.train.iterations}});
  write_training_log(result.log, dir / "train_log.jsonl");
  save_pair_set(result.pairs, dir / "pairs.tsv");
  write_json(dir / "config.json", doc);
  write_provenance(dir, "train", args, o, doc);
  out << "trained " << rc.train.iterations << " iterations in " << seconds << " s; final loss "
      << result.log.back().loss << "; pairs " << result.pairs.positives() << " positive / "
      << result.pairs.negatives() << " negative\n";
  out << "checkpoint: " << (dir / "checkpoint.mvbckpt").string() << '\n';
  return kExitOk;
}

PreprocessConfig eval_preprocess(const nlohmann::ordered_json& metadata) {
  PreprocessConfig p;
  if (metadata.contains("train")) p = train_config_from_json(metadata.at("train")).preprocess;
  p.train_mode = false;
  return p;
}

int cmd_mine(const Options& o, const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (o.checkpoint.empty()) throw UsageError("--checkpoint is required");
  auto ckpt = nets::load_checkpoint(o.checkpoint);
  Json doc = ckpt.metadata.contains("train") ? ckpt.metadata["train"] : to_json(TrainConfig{});
  doc["seed"] = o.common.seed;
  std::vector<std::string> train_overrides;
  for (const auto& a : o.common.overrides) {
    if (!a.starts_with("train.")) throw ConfigError("mine accepts only train.* overrides, got '" + a + "'");
    train_overrides.push_back(a.substr(6));
  }
  apply_overrides(doc, train_overrides);
  const TrainConfig tc = train_config_from_json(doc);

  const auto loaded = load_split(o, "train", err);
  const PairSet base = o.pairs_file.empty() ? build_base_pair_set(loaded.manifest, tc.pairing, o.common.seed)
                                            : load_pair_set(o.pairs_file);
  PreparedImageCache images(loaded.image_dir, eval_preprocess(ckpt.metadata));
  NetworkModel model(ckpt.network, images, tc.margin);
  const auto mined = mine_hard_negatives(model, loaded.manifest, tc.mining, base, o.common.seed);
  for (const auto& w : mined.warnings) err << "warning: " << w << '\n';

  PairSet augmented = base;
  for (const auto& s : mined.mined) augmented.samples.push_back(s);
  augmented.provenance["mined"] = mined.mined.size();
  const fs::path path = require_out(o);
  save_pair_set(augmented, path);
  out << "scored " << mined.candidates_scored << " cross-identity pairs, " << mined.above_threshold
      << " above threshold, added " << mined.mined.size() << " negatives; ratio 1:"
      << augmented.negatives_per_positive() << '\n';
  write_provenance(path.parent_path().empty() ? fs::path(".") : path.parent_path(), "mine", args, o,
                   {{"train", doc}});
  return kExitOk;
}

int cmd_eval(const Options& o, const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (o.checkpoint.empty()) throw UsageError("--checkpoint is required");
  if (!o.common.overrides.empty()) throw ConfigError("eval takes no --set overrides");
  auto ckpt = nets::load_checkpoint(o.checkpoint);
  const auto loaded = load_split(o, "test", err);
  PreparedImageCache images(loaded.image_dir, eval_preprocess(ckpt.metadata));
  const double margin = ckpt.metadata.contains("train")
                            ? train_config_from_json(ckpt.metadata["train"]).margin
                            : nets::kDefaultMargin;
  NetworkModel model(ckpt.network, images, margin);
  const auto result = evaluate(model, loaded.manifest);
  out << render_cmc(result.report);

  const fs::path dir = o.out.empty() ? fs::path(o.checkpoint).parent_path() / "eval" : fs::path(o.out);
  write_json(dir / "report.json", to_json(result.report));
  write_score_tables(result.score_tables, dir / "scores.tsv");
  if (!o.plot.empty()) write_cmc_svg({{"model", result.report}}, o.plot);
  write_provenance(dir, "eval", args, o, {{"checkpoint", o.checkpoint}});
  out << "report: " << (dir / "report.json").string() << '\n';
  return kExitOk;
}

std::vector<AblationRow> load_grid(const std::string& spec) {
  if (spec == "default") return default_grid();
  std::ifstream in(spec);
  if (!in) throw UsageError("--grid must be 'default' or a JSON file");
  const Json j = Json::parse(in);
  std::vector<AblationRow> rows;
  for (const auto& r : j.at("rows")) {
    rows.push_back({r.value("merged", false), r.value("ats", false), r.value("se", false), r.value("mask", false)});
  }
  return rows;
}

int cmd_ablate(const Options& o, const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const Json doc = load_run_config(o, true);
  const RunConfig rc = run_config_from_json(doc);
  const auto grid = load_grid(o.grid);
  const auto train_split = load_split(o, "train", err);
  const auto test_split = load_split(o, "test", err);
  if (train_split.image_dir != test_split.image_dir) throw UsageError("train and test manifests must share images");
  const fs::path image_dir = train_split.image_dir;
  AblationData data{&train_split.manifest, &test_split.manifest,
                    [image_dir](const ImageRecord& r) { return read_png(image_dir / r.image_path); }};

  const auto report = run_ablation(grid, rc.network, rc.train, data, [&](std::size_t i, const AblationResult& r) {
    err << "row " << i + 1 << "/" << grid.size() << " " << r.row.name() << ": "
        << (r.report ? "rank1 " + std::to_string(r.report->at(1)) : "failed: " + r.error) << " (" << r.seconds
        << " s)\n";
  });
  const fs::path dir = require_out(o);
  write_json(dir / "ablation.json", to_json(report));
  const std::string table = render_table(report);
  std::ofstream(dir / "table.txt") << table;
  std::vector<std::pair<std::string, CMCReport>> curves;
  for (const auto& r : report.rows) {
    if (r.report) curves.emplace_back(r.row.name(), *r.report);
  }
  write_cmc_svg(curves, dir / "cmc.svg");
  write_provenance(dir, "ablate", args, o, doc);
  out << table;
  const bool all_ok = std::all_of(report.rows.begin(), report.rows.end(), [](const auto& r) { return r.report.has_value(); });
  return all_ok ? kExitOk : kExitFailure;
}

int cmd_report(const Options& o, std::ostream& out) {
  if (o.input.empty()) throw UsageError("--input is required");
  std::ifstream in(o.input);
  if (!in) throw std::runtime_error("cannot open " + o.input);
  const Json j = Json::parse(in);
  std::vector<std::pair<std::string, CMCReport>> curves;
  auto parse_report = [](const Json& r) {
    CMCReport c;
    c.ranks = r.at("ranks").get<std::vector<int>>();
    c.values = r.at("values").get<std::vector<double>>();
    c.n_probes = r.at("n_probes").get<std::size_t>();
    c.n_gallery_identities = r.at("n_gallery_identities").get<std::size_t>();
    c.ground_truth_ranks = r.at("ground_truth_ranks").get<std::vector<int>>();
    return c;
  };
  if (j.contains("rows")) {
    AblationReport report;
    for (const auto& r : j.at("rows")) {
      AblationResult row{{r.at("merged").get<bool>(), r.at("ats").get<bool>(), r.at("se").get<bool>(),
                          r.at("mask").get<bool>()},
                         std::nullopt, r.value("error", ""), r.value("seconds", 0.0)};
      if (r.contains("report")) row.report = parse_report(r.at("report"));
      if (row.report) curves.emplace_back(row.row.name(), *row.report);
      report.rows.push_back(std::move(row));
    }
    out << render_table(report);
  } else {
    const auto c = parse_report(j);
    out << render_cmc(c);
    curves.emplace_back("model", c);
  }
  if (!o.plot.empty()) write_cmc_svg(curves, o.plot);
  return kExitOk;
}

void add_common(CLI::App* cmd, Options& o, bool overrides) {
  cmd->add_option("--seed", o.common.seed, "Root seed for every random stream")->capture_default_str();
  if (overrides) {
    cmd->add_option("--set", o.common.overrides, "Config override key=value (repeatable)");
  }
}

void add_run_config(CLI::App* cmd, Options& o) {
  cmd->add_option("--profile", o.common.profile, "Default settings: desk or full")
      ->check(CLI::IsMember({"desk", "full"}))
      ->capture_default_str();
  cmd->add_option("--config", o.common.config_file, "JSON file with network/train settings");
  cmd->add_option("--variant", o.variant, "Network variant: merged or basic")
      ->check(CLI::IsMember({"merged", "basic", "MERGED", "BASIC"}));
  cmd->add_flag("--se", o.se, "Insert SE blocks after pool4 and pool5");
  cmd->add_flag("--mask", o.mask, "Train and evaluate on masked images");
  cmd->add_flag("--ats", o.ats, "Augment the training set with mined hard negatives");
  cmd->add_option("--iterations", o.iterations, "Optimization steps");
  cmd->add_option("--batch-pairs", o.batch_pairs, "Image pairs per minibatch");
  cmd->add_option("--lr", o.lr, "Base learning rate");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Cross-domain baggage re-identification pipeline", "mvb"};
  app.set_version_flag("--version", version());
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "Render a synthetic multi-view dataset with train/test splits");
  add_common(gen, o, true);
  gen->add_option("--identities", o.identities, "Number of identities")->capture_default_str();
  gen->add_option("--test-identities", o.test_identities, "Identities held out for testing (default: a third)");
  gen->add_option("--image-size", o.image_size, "Square image side in pixels");
  gen->add_option("--distractor-similarity", o.distractor_similarity, "0 = independent identities, 1 = shared look");
  gen->add_option("--out", o.out, "Output dataset directory")->required();

  auto* pairs = app.add_subcommand("pairs", "Build the balanced base pair set");
  add_common(pairs, o, false);
  pairs->add_option("--data", o.data, "Dataset directory or train manifest");
  pairs->add_option("--mode", o.mode, "CROSS_DOMAIN or ALL")->capture_default_str();
  pairs->add_option("--out", o.out, "Output pair set file")->required();

  auto* tr = app.add_subcommand("train", "Train a Siamese network");
  add_common(tr, o, true);
  add_run_config(tr, o);
  tr->add_option("--data", o.data, "Dataset directory or train manifest");
  tr->add_option("--out", o.out, "Output run directory")->required();
  tr->add_option("--log-every", o.log_every, "Progress line interval; 0 disables")->capture_default_str();

  auto* mine = app.add_subcommand("mine", "Mine hard negatives with a trained model");
  add_common(mine, o, true);
  mine->add_option("--checkpoint", o.checkpoint, "Trained checkpoint")->required();
  mine->add_option("--data", o.data, "Dataset directory or train manifest");
  mine->add_option("--pairs", o.pairs_file, "Base pair set (default: rebuild from --seed)");
  mine->add_option("--out", o.out, "Output augmented pair set file")->required();

  auto* ev = app.add_subcommand("eval", "Compute CMC on the test split");
  add_common(ev, o, false);
  ev->add_option("--checkpoint", o.checkpoint, "Trained checkpoint")->required();
  ev->add_option("--data", o.data, "Dataset directory or test manifest");
  ev->add_option("--out", o.out, "Output directory (default: <checkpoint dir>/eval)");
  ev->add_option("--plot", o.plot, "Write the CMC curve as SVG");

  auto* ab = app.add_subcommand("ablate", "Train and evaluate a grid of configurations");
  add_common(ab, o, true);
  add_run_config(ab, o);
  ab->add_option("--grid", o.grid, "'default' or a JSON file with rows of merged/ats/se/mask")->capture_default_str();
  ab->add_option("--data", o.data, "Dataset directory with train/ and test/ manifests");
  ab->add_option("--out", o.out, "Output directory")->required();

  auto* rep = app.add_subcommand("report", "Render a saved evaluation or ablation report");
  rep->add_option("--input", o.input, "report.json or ablation.json")->required();
  rep->add_option("--plot", o.plot, "Write CMC curves as SVG");

  std::ostringstream help_out, help_err;
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, help_out, help_err);
    out << help_out.str();
    err << help_err.str();
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_generate(o, args, out);
    if (pairs->parsed()) return cmd_pairs(o, args, out, err);
    if (tr->parsed()) return cmd_train(o, args, out, err);
    if (mine->parsed()) return cmd_mine(o, args, out, err);
    if (ev->parsed()) return cmd_eval(o, args, out, err);
    if (ab->parsed()) return cmd_ablate(o, args, out, err);
    if (rep->parsed()) return cmd_report(o, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace mvb::cli
