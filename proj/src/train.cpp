#include "mvb/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "json.hpp"
#include "mvb/model.hpp"
#include "mvb/rng.hpp"

namespace mvb {

using nets::Parameter;
using nets::SiameseNetwork;

void TrainConfig::validate() const {
  if (iterations < 1) throw TrainError("iterations must be >= 1");
  if (batch_pairs < 2) throw TrainError("batch_pairs must be >= 2");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw TrainError("learning_rate must be > 0");
  if (momentum < 0 || momentum >= 1) throw TrainError("momentum must be in [0,1)");
  if (weight_decay < 0) throw TrainError("weight_decay must be >= 0");
  if (!(margin > 0)) throw TrainError("margin must be > 0");
  if (lr_decay <= 0) throw TrainError("lr_decay must be > 0");
  for (double s : lr_steps) {
    if (s < 0 || s > 1) throw TrainError("lr_steps must lie in [0,1]");
  }
  if (mining.enabled) {
    if (mining.base_epochs < 1) throw TrainError("mining.base_epochs must be >= 1");
    if (mining.n_identities < 1) throw TrainError("mining.n_identities must be >= 1");
    if (mining.target_ratio < 1) throw TrainError("mining.target_ratio must be >= 1");
  }
  preprocess.validate();
}

double TrainConfig::learning_rate_at(int iteration) const {
  double lr = learning_rate;
  for (double s : lr_steps) {
    if (iteration >= static_cast<int>(std::lround(s * iterations))) lr *= lr_decay;
  }
  return lr;
}

namespace {

void sgd_step(SiameseNetwork& net, const TrainConfig& config, double lr) {
  const auto mu = static_cast<float>(config.momentum);
  const auto rate = static_cast<float>(lr);
  const auto wd = static_cast<float>(config.weight_decay);
  for (Parameter* p : net.trainable_parameters()) {
    const float decay = p->decays() ? wd : 0.0F;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const float g = p->grad[i] + decay * p->value[i];
      p->velocity[i] = mu * p->velocity[i] - rate * g;
      p->value[i] += p->velocity[i];
    }
  }
}

/// Hands out shuffled minibatches, one epoch at a time.
class BatchStream {
 public:
  BatchStream(std::uint64_t seed, int batch) : seed_(seed), batch_(static_cast<std::size_t>(batch)) {}

  void reset(std::size_t n_pairs) {
    n_ = n_pairs;
    cursor_ = n_;
  }
  int epoch() const { return epoch_; }
  std::size_t batches_per_epoch() const { return (n_ + batch_ - 1) / batch_; }

  std::vector<std::size_t> next() {
    if (cursor_ >= n_) {
      order_.resize(n_);
      std::iota(order_.begin(), order_.end(), std::size_t{0});
      ++epoch_;
      auto rng = Rng::substream(seed_, "train.epoch", static_cast<std::uint64_t>(epoch_));
      rng.shuffle(order_.begin(), order_.end());
      cursor_ = 0;
    }
    const std::size_t end = std::min(n_, cursor_ + batch_);
    std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(end));
    cursor_ = end;
    return out;
  }

 private:
  std::uint64_t seed_;
  std::size_t batch_;
  std::size_t n_ = 0;
  std::size_t cursor_ = 0;
  int epoch_ = 0;
  std::vector<std::size_t> order_;
};

}  // namespace

TrainResult train(const nets::NetworkConfig& net_config, const DatasetManifest& train,
                  PreparedImageCache::Loader loader, const TrainConfig& config,
                  const ProgressCallback& progress) {
  config.validate();
  net_config.validate();
  if (config.preprocess.crop_to != net_config.input_size) {
    throw TrainError("preprocess.crop_to (" + std::to_string(config.preprocess.crop_to) +
                     ") must equal the network input size (" + std::to_string(net_config.input_size) + ")");
  }

  TrainResult result{SiameseNetwork(net_config, config.seed), {}, {}, std::nullopt, 0};
  result.pairs = build_base_pair_set(train, config.pairing, config.seed);
  if (result.pairs.samples.empty()) throw TrainError("training manifest yields no pairs");

  PreprocessConfig prep = config.preprocess;
  prep.train_mode = true;
  PreparedImageCache images(std::move(loader), prep);
  const auto index = train.by_id();

  BatchStream batches(config.seed, config.batch_pairs);
  batches.reset(result.pairs.samples.size());
  result.phase1_iterations = config.iterations;
  if (config.mining.enabled) {
    const auto per_epoch = static_cast<long long>(batches.batches_per_epoch());
    result.phase1_iterations =
        static_cast<int>(std::min<long long>(per_epoch * config.mining.base_epochs, config.iterations));
  }

  SiameseNetwork& net = result.network;
  int phase = 1;
  for (int it = 0; it < config.iterations; ++it) {
    if (config.mining.enabled && phase == 1 && it == result.phase1_iterations) {
      NetworkModel model(net, images, config.margin);
      auto mined = mine_hard_negatives(model, train, config.mining, result.pairs, config.seed);
      for (const auto& s : mined.mined) result.pairs.samples.push_back(s);
      result.pairs.provenance["mined"] = mined.mined.size();
      result.mining = std::move(mined);
      batches.reset(result.pairs.samples.size());
      phase = 2;
    }

    const auto picks = batches.next();
    std::vector<FloatImage> probe_imgs, gallery_imgs;
    std::vector<int> labels;
    for (std::size_t slot = 0; slot < picks.size(); ++slot) {
      const auto& pair = result.pairs.samples[picks[slot]];
      auto rng = Rng::substream(config.seed, "train.crops",
                                static_cast<std::uint64_t>(it) * 4096 + slot);
      probe_imgs.push_back(images.sample(*index.at(pair.probe_image_id), rng));
      gallery_imgs.push_back(images.sample(*index.at(pair.gallery_image_id), rng));
      labels.push_back(pair.label == PairLabel::kPositive ? 1 : 0);
    }

    net.zero_grad();
    const double loss = net.accumulate_gradients(stack_images(probe_imgs), stack_images(gallery_imgs),
                                                 labels, config.margin);
    if (!std::isfinite(loss)) {
      throw TrainError("loss became non-finite at iteration " + std::to_string(it + 1) + " (phase " +
                       std::to_string(phase) + ", lr " + std::to_string(config.learning_rate_at(it)) +
                       "); lower the learning rate");
    }
    const double lr = config.learning_rate_at(it);
    sgd_step(net, config, lr);

    TrainLogEntry entry{it + 1, batches.epoch(), phase, loss, lr};
    result.log.push_back(entry);
    if (progress) progress(entry);
  }
  return result;
}

TrainResult train(const nets::NetworkConfig& net_config, const DatasetManifest& train_manifest,
                  const std::filesystem::path& image_dir, const TrainConfig& config,
                  const ProgressCallback& progress) {
  return train(
      net_config, train_manifest,
      [image_dir](const ImageRecord& r) { return read_png(image_dir / r.image_path); }, config,
      progress);
}

std::vector<double> epoch_mean_losses(const std::vector<TrainLogEntry>& log) {
  std::map<int, std::pair<double, int>> sums;
  for (const auto& e : log) {
    auto& [sum, n] = sums[e.epoch];
    sum += e.loss;
    ++n;
  }
  std::vector<double> out;
  for (const auto& [epoch, s] : sums) out.push_back(s.first / s.second);
  return out;
}

void write_training_log(const std::vector<TrainLogEntry>& log, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TrainError("cannot write training log: " + path.string());
  for (const auto& e : log) {
    nlohmann::ordered_json j{{"iteration", e.iteration}, {"epoch", e.epoch}, {"phase", e.phase},
                             {"loss", e.loss},           {"learning_rate", e.learning_rate}};
    out << j.dump() << '\n';
  }
}

std::vector<TrainLogEntry> read_training_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TrainError("cannot open training log: " + path.string());
  std::vector<TrainLogEntry> log;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    log.push_back({j.at("iteration").get<int>(), j.at("epoch").get<int>(), j.at("phase").get<int>(),
                   j.at("loss").get<double>(), j.at("learning_rate").get<double>()});
  }
  return log;
}

}  // namespace mvb
