#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mvb::nets {

/// Pair label: 1 for same identity, 0 for different.
using PairLabel = int;

inline constexpr double kProbabilityEpsilon = 1e-7;
inline constexpr double kDefaultMargin = 1.0;

/// L = y d^2 + (1 - y) max(0, m - d)^2
inline double contrastive_loss(double distance, PairLabel label, double margin = kDefaultMargin) {
  if (distance < 0.0) throw std::domain_error("contrastive_loss: negative distance");
  if (margin <= 0.0) throw std::domain_error("contrastive_loss: margin must be positive");
  if (label) return distance * distance;
  const double gap = std::max(0.0, margin - distance);
  return gap * gap;
}

/// dL/dd of contrastive_loss.
inline double contrastive_loss_grad(double distance, PairLabel label,
                                    double margin = kDefaultMargin) {
  if (distance < 0.0) throw std::domain_error("contrastive_loss: negative distance");
  if (label) return 2.0 * distance;
  return distance < margin ? -2.0 * (margin - distance) : 0.0;
}

inline double clamp_probability(double p) {
  return std::clamp(p, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
}

/// -[y log p + (1 - y) log(1 - p)] with p clamped to [eps, 1 - eps].
inline double cross_entropy_loss(double p, PairLabel label) {
  const double q = clamp_probability(p);
  return label ? -std::log(q) : -std::log(1.0 - q);
}

/// dL/dp of cross_entropy_loss; zero where the clamp is active.
inline double cross_entropy_grad(double p, PairLabel label) {
  if (p <= kProbabilityEpsilon || p >= 1.0 - kProbabilityEpsilon) return 0.0;
  return label ? -1.0 / p : 1.0 / (1.0 - p);
}

}  // namespace mvb::nets
