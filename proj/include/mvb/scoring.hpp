#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mvb/data_model.hpp"

namespace mvb {

enum class ScoreKind {
  kDistance,     // lower is better
  kProbability,  // higher is better
};

std::string_view to_string(ScoreKind kind);

/// One probe's scores against every gallery image.
struct ScoreTable {
  std::string probe_id;
  ScoreKind kind = ScoreKind::kProbability;
  std::vector<std::pair<std::string, double>> scores;  // (gallery_image_id, score)

  friend bool operator==(const ScoreTable&, const ScoreTable&) = default;
};

/// Anything that can score (probe, gallery) image pairs. Shared by
/// evaluation and hard-example mining so both use one scoring path.
class SimilarityModel {
 public:
  virtual ~SimilarityModel() = default;
  virtual ScoreKind kind() const = 0;

  /// result[p][g] is the score of probes[p] against gallery[g].
  virtual std::vector<std::vector<double>> score(std::span<const ImageRecord* const> probes,
                                                 std::span<const ImageRecord* const> gallery) = 0;

  /// Maps a raw score onto P(same identity).
  virtual double same_probability(double score) const = 0;
};

}  // namespace mvb
