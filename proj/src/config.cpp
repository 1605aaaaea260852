#include "mvb/config.hpp"

#include <set>

namespace mvb {

namespace {

std::string_view to_string(nets::Variant v) { return v == nets::Variant::kMerged ? "MERGED" : "BASIC"; }
std::string_view to_string(nets::MergePoint m) {
  return m == nets::MergePoint::kAfterPool5 ? "after_pool5" : "before_pool5";
}

void reject_unknown(const Json& j, std::initializer_list<const char*> known, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " config must be an object");
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError(std::string("unknown ") + what + " key '" + key + "'");
  }
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

Json to_json(const PreprocessConfig& c) {
  return {{"use_mask", c.use_mask}, {"resize_to", c.resize_to}, {"crop_to", c.crop_to},
          {"train_mode", c.train_mode}};
}

PreprocessConfig preprocess_config_from_json(const Json& j) {
  reject_unknown(j, {"use_mask", "resize_to", "crop_to", "train_mode"}, "preprocess");
  PreprocessConfig c;
  read(j, "use_mask", c.use_mask);
  read(j, "resize_to", c.resize_to);
  read(j, "crop_to", c.crop_to);
  read(j, "train_mode", c.train_mode);
  return c;
}

Json to_json(const SynthConfig& c) {
  return {{"n_identities", c.n_identities},
          {"bhs_views", c.bhs_views},
          {"checkpoint_views", c.checkpoint_views},
          {"image_size", c.image_size},
          {"noise",
           {{"checkpoint_blur", c.noise.checkpoint_blur},
            {"color_shift", c.noise.color_shift},
            {"occlusion_prob", c.noise.occlusion_prob},
            {"missing_view_prob", c.noise.missing_view_prob}}},
          {"distractor_similarity", c.distractor_similarity},
          {"max_decals", c.max_decals},
          {"material_weights", c.material_weights},
          {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const Json& j) {
  reject_unknown(j,
                 {"n_identities", "bhs_views", "checkpoint_views", "image_size", "noise",
                  "distractor_similarity", "max_decals", "material_weights", "seed"},
                 "synth");
  SynthConfig c;
  read(j, "n_identities", c.n_identities);
  read(j, "bhs_views", c.bhs_views);
  read(j, "checkpoint_views", c.checkpoint_views);
  read(j, "image_size", c.image_size);
  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    reject_unknown(n, {"checkpoint_blur", "color_shift", "occlusion_prob", "missing_view_prob"}, "noise");
    read(n, "checkpoint_blur", c.noise.checkpoint_blur);
    read(n, "color_shift", c.noise.color_shift);
    read(n, "occlusion_prob", c.noise.occlusion_prob);
    read(n, "missing_view_prob", c.noise.missing_view_prob);
  }
  read(j, "distractor_similarity", c.distractor_similarity);
  read(j, "max_decals", c.max_decals);
  read(j, "material_weights", c.material_weights);
  read(j, "seed", c.seed);
  return c;
}

Json to_json(const nets::NetworkConfig& c) {
  return {{"variant", to_string(c.variant)},
          {"use_se", c.use_se},
          {"se_reduction", c.se_reduction},
          {"freeze_stages", c.freeze_stages},
          {"bn_stages", c.bn_stages},
          {"head_widths", c.head_widths},
          {"embedding_width", c.embedding_width},
          {"backbone_scale", c.backbone_scale},
          {"input_size", c.input_size},
          {"merge_point", to_string(c.merge_point)},
          {"bn_momentum", c.bn_momentum}};
}

nets::NetworkConfig network_config_from_json(const Json& j) {
  reject_unknown(j,
                 {"variant", "use_se", "se_reduction", "freeze_stages", "bn_stages", "head_widths",
                  "embedding_width", "backbone_scale", "input_size", "merge_point", "bn_momentum"},
                 "network");
  nets::NetworkConfig c;
  if (j.contains("variant")) {
    const auto v = j.at("variant").get<std::string>();
    if (v == "MERGED") c.variant = nets::Variant::kMerged;
    else if (v == "BASIC") c.variant = nets::Variant::kBasic;
    else throw ConfigError("unknown variant '" + v + "' (expected MERGED or BASIC)");
  }
  read(j, "use_se", c.use_se);
  read(j, "se_reduction", c.se_reduction);
  read(j, "freeze_stages", c.freeze_stages);
  read(j, "bn_stages", c.bn_stages);
  read(j, "head_widths", c.head_widths);
  read(j, "embedding_width", c.embedding_width);
  read(j, "backbone_scale", c.backbone_scale);
  read(j, "input_size", c.input_size);
  if (j.contains("merge_point")) {
    const auto m = j.at("merge_point").get<std::string>();
    if (m == "after_pool5") c.merge_point = nets::MergePoint::kAfterPool5;
    else if (m == "before_pool5") c.merge_point = nets::MergePoint::kBeforePool5;
    else throw ConfigError("unknown merge_point '" + m + "'");
  }
  read(j, "bn_momentum", c.bn_momentum);
  return c;
}

Json to_json(const MiningConfig& c) {
  return {{"enabled", c.enabled},
          {"base_epochs", c.base_epochs},
          {"n_identities", c.n_identities},
          {"threshold", c.threshold},
          {"target_ratio", c.target_ratio}};
}

MiningConfig mining_config_from_json(const Json& j) {
  reject_unknown(j, {"enabled", "base_epochs", "n_identities", "threshold", "target_ratio"}, "mining");
  MiningConfig c;
  read(j, "enabled", c.enabled);
  read(j, "base_epochs", c.base_epochs);
  read(j, "n_identities", c.n_identities);
  read(j, "threshold", c.threshold);
  read(j, "target_ratio", c.target_ratio);
  return c;
}

Json to_json(const TrainConfig& c) {
  return {{"iterations", c.iterations},
          {"batch_pairs", c.batch_pairs},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"lr_steps", c.lr_steps},
          {"lr_decay", c.lr_decay},
          {"margin", c.margin},
          {"pairing", to_string(c.pairing)},
          {"mining", to_json(c.mining)},
          {"seed", c.seed},
          {"preprocess", to_json(c.preprocess)}};
}

TrainConfig train_config_from_json(const Json& j) {
  reject_unknown(j,
                 {"iterations", "batch_pairs", "learning_rate", "momentum", "weight_decay", "lr_steps",
                  "lr_decay", "margin", "pairing", "mining", "seed", "preprocess"},
                 "train");
  TrainConfig c;
  read(j, "iterations", c.iterations);
  read(j, "batch_pairs", c.batch_pairs);
  read(j, "learning_rate", c.learning_rate);
  read(j, "momentum", c.momentum);
  read(j, "weight_decay", c.weight_decay);
  read(j, "lr_steps", c.lr_steps);
  read(j, "lr_decay", c.lr_decay);
  read(j, "margin", c.margin);
  if (j.contains("pairing")) {
    try {
      c.pairing = parse_pairing_mode(j.at("pairing").get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
  if (j.contains("mining")) c.mining = mining_config_from_json(j.at("mining"));
  read(j, "seed", c.seed);
  if (j.contains("preprocess")) c.preprocess = preprocess_config_from_json(j.at("preprocess"));
  return c;
}

RunConfig profile_defaults(std::string_view profile) {
  RunConfig c;
  if (profile == "full") {
    c.train.iterations = 50000;
    c.train.batch_pairs = 128;
    return c;
  }
  if (profile != "desk") throw ConfigError("unknown profile '" + std::string(profile) + "' (expected desk or full)");
  c.network.backbone_scale = 0.25;
  c.network.input_size = 64;
  c.train.preprocess.resize_to = 72;
  c.train.preprocess.crop_to = 64;
  c.train.learning_rate = 0.01;
  return c;
}

Json to_json(const RunConfig& c) { return {{"network", to_json(c.network)}, {"train", to_json(c.train)}}; }

RunConfig run_config_from_json(const Json& j) {
  reject_unknown(j, {"network", "train"}, "run");
  RunConfig c;
  if (j.contains("network")) c.network = network_config_from_json(j.at("network"));
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  return c;
}

void apply_override(Json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  *node = std::move(value);
}

void apply_overrides(Json& doc, const std::vector<std::string>& assignments) {
  for (const auto& a : assignments) apply_override(doc, a);
}

}  // namespace mvb
