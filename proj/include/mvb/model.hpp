#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "mvb/nets/network.hpp"
#include "mvb/preprocess.hpp"
#include "mvb/scoring.hpp"

namespace mvb {

/// Stacks equally sized HWC images into one NHWC batch.
nets::Tensor stack_images(std::span<const FloatImage> images);

/// Scores image pairs with a trained SiameseNetwork. Backbone maps are
/// computed once per image and branch; only the head runs per pair.
class NetworkModel : public SimilarityModel {
 public:
  /// Both references must outlive the model. The cache should be in
  /// centered-crop mode.
  NetworkModel(const nets::SiameseNetwork& network, PreparedImageCache& images,
               double margin = 1.0, int batch_size = 32);

  ScoreKind kind() const override;
  std::vector<std::vector<double>> score(std::span<const ImageRecord* const> probes,
                                         std::span<const ImageRecord* const> gallery) override;
  /// Merged: the score itself. Basic: max(0, 1 - distance / margin), which
  /// is 1 at distance 0 and 0 once a pair clears the contrastive margin.
  double same_probability(double score) const override;

  /// Drops cached backbone maps, e.g. after the weights changed.
  void clear_cache();

 private:
  const std::vector<float>& features(const ImageRecord& record, nets::Branch branch);
  void fill(std::span<const ImageRecord* const> records, nets::Branch branch);

  const nets::SiameseNetwork& network_;
  PreparedImageCache& images_;
  double margin_;
  int batch_size_;
  std::array<std::map<std::string, std::vector<float>>, 2> features_;
};

}  // namespace mvb
