#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mvb/nets/network.hpp"
#include "mvb/pairs.hpp"
#include "mvb/preprocess.hpp"
#include "mvb/synth.hpp"
#include "mvb/train.hpp"

namespace mvb {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Json = nlohmann::ordered_json;

Json to_json(const PreprocessConfig& c);
Json to_json(const SynthConfig& c);
Json to_json(const nets::NetworkConfig& c);
Json to_json(const MiningConfig& c);
Json to_json(const TrainConfig& c);

/// Keys absent from `j` keep their defaults; unknown keys are rejected.
PreprocessConfig preprocess_config_from_json(const Json& j);
SynthConfig synth_config_from_json(const Json& j);
nets::NetworkConfig network_config_from_json(const Json& j);
MiningConfig mining_config_from_json(const Json& j);
TrainConfig train_config_from_json(const Json& j);

/// Network plus training settings, the unit a training run is configured by.
struct RunConfig {
  nets::NetworkConfig network;
  TrainConfig train;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// "desk": reduced resolution and width sized for one CPU core.
/// "full": full VGG16 widths, 256 -> 224 crops, 128-pair batches, 50k steps.
RunConfig profile_defaults(std::string_view profile);

Json to_json(const RunConfig& c);
RunConfig run_config_from_json(const Json& j);

/// Applies "dotted.key=value" assignments onto a config document. The key
/// must already exist; the value is parsed as JSON when possible and taken
/// as a string otherwise.
void apply_override(Json& doc, const std::string& assignment);
void apply_overrides(Json& doc, const std::vector<std::string>& assignments);

}  // namespace mvb
