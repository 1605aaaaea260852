#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mvb/data_model.hpp"
#include "mvb/scoring.hpp"

namespace mvb {

enum class PairLabel { kNegative = 0, kPositive = 1 };
enum class PairSource { kBase, kMined };
enum class PairingMode {
  kCrossDomain,  // checkpoint probe x BHS gallery
  kAll,          // every unordered image pair
};

std::string_view to_string(PairLabel label);
std::string_view to_string(PairSource source);
std::string_view to_string(PairingMode mode);
PairingMode parse_pairing_mode(std::string_view text);

struct PairSample {
  std::string probe_image_id;
  std::string gallery_image_id;
  PairLabel label = PairLabel::kNegative;
  PairSource source = PairSource::kBase;

  friend bool operator==(const PairSample&, const PairSample&) = default;
};

struct PairSet {
  std::vector<PairSample> samples;
  nlohmann::ordered_json provenance = nlohmann::ordered_json::object();

  std::size_t positives() const;
  std::size_t negatives() const;
  /// negatives per positive; 0 when there are no positives.
  double negatives_per_positive() const;
  bool has_duplicates() const;

  friend bool operator==(const PairSet&, const PairSet&) = default;
};

class PairError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Cross-domain: every checkpoint x BHS combination inside each identity.
/// All: every unordered image pair inside each identity.
std::vector<PairSample> build_positive_pairs(const DatasetManifest& train, PairingMode mode);

/// Number of distinct different-identity pairs available under `mode`.
std::size_t count_negative_candidates(const DatasetManifest& train, PairingMode mode);

/// Exactly `count` distinct different-identity pairs that are not in `exclude`.
std::vector<PairSample> sample_negative_pairs(const DatasetManifest& train, std::size_t count,
                                              const PairSet& exclude, std::uint64_t seed,
                                              PairingMode mode = PairingMode::kCrossDomain);

/// Positives plus an equal number of random negatives.
PairSet build_base_pair_set(const DatasetManifest& train, PairingMode mode, std::uint64_t seed);

struct MiningConfig {
  bool enabled = false;
  /// Epochs over the balanced set before mining.
  int base_epochs = 2;
  int n_identities = 300;
  double threshold = 0.5;
  /// Target negatives per positive in the augmented set.
  double target_ratio = 2.0;

  friend bool operator==(const MiningConfig&, const MiningConfig&) = default;
};

struct MiningResult {
  std::vector<PairSample> mined;
  std::size_t candidates_scored = 0;
  std::size_t above_threshold = 0;
  std::vector<std::string> sampled_identities;
  std::vector<std::string> warnings;
};

/// Scores every cross-identity (checkpoint, BHS) pair among a random sample
/// of identities and returns the confident false positives as extra
/// negatives, highest probability first (ties by probe id, then gallery id),
/// truncated so base + mined reaches the target ratio.
MiningResult mine_hard_negatives(SimilarityModel& model, const DatasetManifest& train,
                                 const MiningConfig& config, const PairSet& base,
                                 std::uint64_t seed);

void save_pair_set(const PairSet& set, const std::filesystem::path& path);
PairSet load_pair_set(const std::filesystem::path& path);

}  // namespace mvb
