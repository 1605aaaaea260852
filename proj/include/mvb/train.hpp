#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvb/data_model.hpp"
#include "mvb/nets/network.hpp"
#include "mvb/pairs.hpp"
#include "mvb/preprocess.hpp"

namespace mvb {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int iterations = 2000;
  int batch_pairs = 32;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  /// Fractions of `iterations` at which the learning rate is multiplied by
  /// `lr_decay`.
  std::vector<double> lr_steps{0.6, 0.85};
  double lr_decay = 0.1;
  /// Contrastive margin for the basic variant.
  double margin = 1.0;
  PairingMode pairing = PairingMode::kCrossDomain;
  MiningConfig mining;
  std::uint64_t seed = 0;
  PreprocessConfig preprocess;

  void validate() const;
  double learning_rate_at(int iteration) const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct TrainLogEntry {
  int iteration = 0;  // 1-based
  int epoch = 0;      // 1-based, counted over both phases
  int phase = 1;
  double loss = 0;
  double learning_rate = 0;
};

struct TrainResult {
  nets::SiameseNetwork network;
  std::vector<TrainLogEntry> log;
  /// The pair set in use when training stopped (base or augmented).
  PairSet pairs;
  std::optional<MiningResult> mining;
  int phase1_iterations = 0;
};

using ProgressCallback = std::function<void(const TrainLogEntry&)>;

/// Minibatch SGD with momentum over the pair set built from `train`. With
/// mining enabled, runs the balanced set for mining.base_epochs epochs,
/// mines once, then continues on the augmented set.
TrainResult train(const nets::NetworkConfig& net_config, const DatasetManifest& train,
                  PreparedImageCache::Loader loader, const TrainConfig& config,
                  const ProgressCallback& progress = {});
TrainResult train(const nets::NetworkConfig& net_config, const DatasetManifest& train,
                  const std::filesystem::path& image_dir, const TrainConfig& config,
                  const ProgressCallback& progress = {});

/// Mean loss of each epoch, in order.
std::vector<double> epoch_mean_losses(const std::vector<TrainLogEntry>& log);

void write_training_log(const std::vector<TrainLogEntry>& log, const std::filesystem::path& path);
std::vector<TrainLogEntry> read_training_log(const std::filesystem::path& path);

}  // namespace mvb
