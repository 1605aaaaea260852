#include "mvb/model.hpp"

#include <algorithm>
#include <cmath>

namespace mvb {

using nets::Branch;
using nets::Tensor;

Tensor stack_images(std::span<const FloatImage> images) {
  if (images.empty()) return {};
  const auto& first = images.front();
  Tensor t(static_cast<int>(images.size()), first.height, first.width, first.channels);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& im = images[i];
    if (im.width != first.width || im.height != first.height || im.channels != first.channels) {
      throw nets::ShapeError("stack_images: images differ in size");
    }
    std::copy(im.data.begin(), im.data.end(), t.sample(static_cast<int>(i)));
  }
  return t;
}

NetworkModel::NetworkModel(const nets::SiameseNetwork& network, PreparedImageCache& images,
                           double margin, int batch_size)
    : network_(network), images_(images), margin_(margin), batch_size_(std::max(1, batch_size)) {}

ScoreKind NetworkModel::kind() const {
  return network_.config().variant == nets::Variant::kMerged ? ScoreKind::kProbability
                                                             : ScoreKind::kDistance;
}

double NetworkModel::same_probability(double score) const {
  if (kind() == ScoreKind::kProbability) return score;
  return std::max(0.0, 1.0 - score / margin_);
}

void NetworkModel::clear_cache() {
  for (auto& m : features_) m.clear();
}

void NetworkModel::fill(std::span<const ImageRecord* const> records, Branch branch) {
  auto& cache = features_[static_cast<std::size_t>(branch)];
  std::vector<const ImageRecord*> todo;
  for (const auto* r : records) {
    if (!cache.contains(r->image_id) &&
        std::none_of(todo.begin(), todo.end(), [r](const ImageRecord* t) { return t->image_id == r->image_id; })) {
      todo.push_back(r);
    }
  }
  const bool basic = network_.config().variant == nets::Variant::kBasic;
  for (std::size_t start = 0; start < todo.size(); start += static_cast<std::size_t>(batch_size_)) {
    const std::size_t end = std::min(todo.size(), start + static_cast<std::size_t>(batch_size_));
    std::vector<FloatImage> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(images_.centered(*todo[i]));
    const Tensor maps = network_.backbone_forward(stack_images(batch), branch);
    if (basic) {
      const auto emb = network_.embed(maps);
      for (std::size_t i = start; i < end; ++i) {
        const auto row = emb.row(static_cast<Eigen::Index>(i - start));
        cache[todo[i]->image_id] = std::vector<float>(row.data(), row.data() + row.size());
      }
    } else {
      for (std::size_t i = start; i < end; ++i) {
        const float* s = maps.sample(static_cast<int>(i - start));
        cache[todo[i]->image_id] = std::vector<float>(s, s + maps.sample_size());
      }
    }
  }
}

const std::vector<float>& NetworkModel::features(const ImageRecord& record, Branch branch) {
  return features_[static_cast<std::size_t>(branch)].at(record.image_id);
}

std::vector<std::vector<double>> NetworkModel::score(std::span<const ImageRecord* const> probes,
                                                     std::span<const ImageRecord* const> gallery) {
  fill(probes, Branch::kProbe);
  fill(gallery, Branch::kGallery);
  std::vector<std::vector<double>> out(probes.size(), std::vector<double>(gallery.size(), 0.0));

  if (network_.config().variant == nets::Variant::kBasic) {
    for (std::size_t p = 0; p < probes.size(); ++p) {
      const auto& a = features(*probes[p], Branch::kProbe);
      for (std::size_t g = 0; g < gallery.size(); ++g) {
        const auto& b = features(*gallery[g], Branch::kGallery);
        double sum = 0;
        for (std::size_t k = 0; k < a.size(); ++k) {
          const double d = static_cast<double>(a[k]) - b[k];
          sum += d * d;
        }
        out[p][g] = std::sqrt(sum);
      }
    }
    return out;
  }

  const int side = network_.config().feature_side();
  const int channels = network_.config().feature_channels();
  for (std::size_t p = 0; p < probes.size(); ++p) {
    const auto& a = features(*probes[p], Branch::kProbe);
    for (std::size_t start = 0; start < gallery.size(); start += 256) {
      const std::size_t end = std::min(gallery.size(), start + 256);
      Tensor merged(static_cast<int>(end - start), side, side, channels);
      for (std::size_t g = start; g < end; ++g) {
        const auto& b = features(*gallery[g], Branch::kGallery);
        float* dst = merged.sample(static_cast<int>(g - start));
        for (std::size_t k = 0; k < a.size(); ++k) dst[k] = a[k] - b[k];
      }
      const auto probs = network_.classify(merged);
      for (std::size_t g = start; g < end; ++g) out[p][g] = probs[g - start];
    }
  }
  return out;
}

}  // namespace mvb
