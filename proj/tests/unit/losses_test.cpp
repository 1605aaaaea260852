#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "mvb/nets/losses.hpp"

namespace mvb::nets {
namespace {

TEST(Contrastive, DocumentedValues) {
  EXPECT_NEAR(contrastive_loss(0.6, 1), 0.36, 1e-12);
  EXPECT_NEAR(contrastive_loss(0.6, 0), 0.16, 1e-12);
  EXPECT_DOUBLE_EQ(contrastive_loss(1.5, 0), 0.0);
  EXPECT_DOUBLE_EQ(contrastive_loss(0.0, 1), 0.0);
  EXPECT_NEAR(contrastive_loss(0.5, 0, 2.0), 2.25, 1e-12);
}

TEST(Contrastive, RejectsNegativeDistanceAndMargin) {
  EXPECT_THROW(contrastive_loss(-0.1, 1), std::domain_error);
  EXPECT_THROW(contrastive_loss(0.1, 1, 0.0), std::domain_error);
  EXPECT_THROW(contrastive_loss_grad(-0.1, 0), std::domain_error);
}

TEST(Contrastive, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) EXPECT_LT(testing::check_contrastive_gradients(rng).max_rel_error, 1e-6);
}

TEST(CrossEntropy, DocumentedValues) {
  EXPECT_NEAR(cross_entropy_loss(0.5, 1), std::log(2.0), 1e-12);
  EXPECT_NEAR(cross_entropy_loss(0.5, 0), std::log(2.0), 1e-12);
  EXPECT_NEAR(cross_entropy_loss(0.1, 1), 2.302585, 1e-6);
  EXPECT_NEAR(cross_entropy_loss(0.9, 0), 2.302585, 1e-6);
}

TEST(CrossEntropy, ClampsAtTheExtremes) {
  EXPECT_NEAR(cross_entropy_loss(0.0, 1), -std::log(kProbabilityEpsilon), 1e-9);
  EXPECT_NEAR(cross_entropy_loss(1.0, 0), -std::log(kProbabilityEpsilon), 1e-6);
  EXPECT_TRUE(std::isfinite(cross_entropy_loss(0.0, 1)));
  EXPECT_DOUBLE_EQ(cross_entropy_grad(0.0, 1), 0.0);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  for (int i = 0; i < 50; ++i) EXPECT_LT(testing::check_cross_entropy_gradients(rng).max_rel_error, 1e-6);
}

}  // namespace
}  // namespace mvb::nets
