#include <gtest/gtest.h>

#include <cmath>

#include "support/oracles.hpp"
#include "vulndet/error.hpp"
#include "vulndet/optim.hpp"

using namespace vulndet;
using namespace vulndet::testkit;

namespace {

double one_step(OptimizerKind kind, double lr, double theta, double grad) {
  Tensor p({1}, theta);
  Optimizer opt({.kind = kind, .learning_rate = lr});
  Tensor* params[] = {&p};
  const Tensor grads[] = {Tensor({1}, grad)};
  opt.step(params, grads);
  return p[0] - theta;
}

constexpr OptimizerKind kAll[] = {OptimizerKind::Sgd, OptimizerKind::Adam, OptimizerKind::RmsProp,
                                  OptimizerKind::Adagrad};

}  // namespace

TEST(Optimizer, AdamFirstStep) {
  EXPECT_NEAR(one_step(OptimizerKind::Adam, 0.001, 0.0, 1.0), -0.001, 1e-10);
}

TEST(Optimizer, AdamFirstStepScaleInvariance) {
  for (double g : {1e-3, 0.5, 7.0, -250.0}) {
    EXPECT_NEAR(std::abs(one_step(OptimizerKind::Adam, 0.01, 1.0, g)), 0.01 * std::abs(g) / (std::abs(g) + 1e-8),
                1e-12);
  }
}

TEST(Optimizer, Sgd) {
  EXPECT_DOUBLE_EQ(one_step(OptimizerKind::Sgd, 0.5, 3.0, 2.0), -1.0);
}

TEST(Optimizer, AdagradTwoSteps) {
  Tensor p({1});
  Optimizer opt({.kind = OptimizerKind::Adagrad, .learning_rate = 1.0});
  Tensor* params[] = {&p};
  const Tensor grads[] = {Tensor({1}, 1.0)};
  opt.step(params, grads);
  EXPECT_NEAR(p[0], -1.0 / (1.0 + 1e-8), 1e-12);
  const double before = p[0];
  opt.step(params, grads);
  EXPECT_NEAR(p[0] - before, -1.0 / (std::sqrt(2.0) + 1e-8), 1e-12);
  EXPECT_EQ(opt.step_count(), 2u);
}

TEST(Optimizer, RmsPropFirstStep) {
  // mean square 0.1 * g^2 after one step
  EXPECT_NEAR(one_step(OptimizerKind::RmsProp, 0.01, 0.0, 2.0), -0.01 * 2.0 / (std::sqrt(0.4) + 1e-8), 1e-12);
}

TEST(Optimizer, ZeroGradientLeavesParametersUnchanged) {
  std::mt19937_64 rng(1);
  for (auto kind : kAll) {
    Tensor a = random_tensor({3, 2}, rng), b = random_tensor({4}, rng);
    const Tensor a0 = a, b0 = b;
    Optimizer opt({.kind = kind, .learning_rate = 0.1});
    Tensor* params[] = {&a, &b};
    const Tensor grads[] = {Tensor({3, 2}), Tensor({4})};
    for (int i = 0; i < 3; ++i) opt.step(params, grads);
    EXPECT_EQ(a, a0) << to_string(kind);
    EXPECT_EQ(b, b0) << to_string(kind);
  }
}

TEST(Optimizer, DescentDirection) {
  std::mt19937_64 rng(2);
  for (auto kind : kAll) {
    Tensor p = random_tensor({10}, rng);
    Optimizer opt({.kind = kind, .learning_rate = 0.05});
    Tensor* params[] = {&p};
    for (int step = 0; step < 5; ++step) {
      const Tensor g = random_tensor({10}, rng);
      const Tensor before = p;
      const Tensor grads[] = {g};
      opt.step(params, grads);
      double inner = 0;
      for (std::size_t i = 0; i < 10; ++i) inner += (p[i] - before[i]) * g[i];
      if (kind == OptimizerKind::Sgd || kind == OptimizerKind::Adagrad || step == 0) {
        EXPECT_LE(inner, 0.0) << to_string(kind) << " step " << step;
      }
    }
  }
}

TEST(Optimizer, StepCountIncrements) {
  Tensor p({2});
  Optimizer opt({});
  Tensor* params[] = {&p};
  const Tensor grads[] = {Tensor({2}, 1.0)};
  for (std::size_t i = 1; i <= 4; ++i) {
    opt.step(params, grads);
    EXPECT_EQ(opt.step_count(), i);
  }
}

TEST(Optimizer, ShapeMismatch) {
  Tensor p({2});
  Optimizer opt({});
  Tensor* params[] = {&p};
  const Tensor grads[] = {Tensor({3})};
  try {
    opt.step(params, grads);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(Optimizer, RejectsNonPositiveLearningRate) {
  EXPECT_THROW(Optimizer({.learning_rate = 0.0}), Error);
}

TEST(Optimizer, GradientClipping) {
  Tensor p({2});
  Optimizer opt({.kind = OptimizerKind::Sgd, .learning_rate = 1.0, .clip_norm = 5.0});
  Tensor* params[] = {&p};
  const Tensor grads[] = {Tensor({2}, std::vector<double>{30, 40})};
  opt.step(params, grads);
  EXPECT_NEAR(p[0], -3.0, 1e-12);
  EXPECT_NEAR(p[1], -4.0, 1e-12);
}

TEST(Optimizer, ParseNames) {
  EXPECT_EQ(parse_optimizer("adam"), OptimizerKind::Adam);
  EXPECT_EQ(parse_optimizer("RMSprop"), OptimizerKind::RmsProp);
  EXPECT_EQ(parse_optimizer("Adagrad"), OptimizerKind::Adagrad);
  EXPECT_EQ(parse_optimizer("sgd"), OptimizerKind::Sgd);
  try {
    parse_optimizer("lbfgs");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
    EXPECT_NE(std::string(e.what()).find("adam"), std::string::npos);
  }
}

TEST(GradientCheck, QuadraticIsExact) {
  Tensor theta({1}, 3.0);
  Tensor* params[] = {&theta};
  const Tensor analytic[] = {Tensor({1}, 3.0)};
  const auto r = gradient_check([&] { return 0.5 * theta[0] * theta[0]; }, params, analytic);
  EXPECT_LT(r.max_relative_error, 1e-9);
  EXPECT_EQ(theta[0], 3.0);
}

TEST(GradientCheck, DetectsScaledGradient) {
  Tensor theta({1}, 3.0);
  Tensor* params[] = {&theta};
  const Tensor analytic[] = {Tensor({1}, 6.0)};
  const auto r = gradient_check([&] { return 0.5 * theta[0] * theta[0]; }, params, analytic);
  EXPECT_NEAR(r.max_relative_error, 0.5, 1e-6);
  EXPECT_NEAR(r.analytic, 6.0, 0.0);
  EXPECT_NEAR(r.numeric, 3.0, 1e-6);
}

TEST(GradientCheck, SubsetSamplingChecksAtLeastFifty) {
  Tensor theta({400});
  for (std::size_t i = 0; i < 400; ++i) theta[i] = 0.01 * static_cast<double>(i);
  Tensor grad = theta;
  Tensor* params[] = {&theta};
  const Tensor analytic[] = {grad};
  GradientCheckOptions o;
  o.max_coordinates_per_tensor = 10;
  const auto r = gradient_check([&] { return 0.5 * theta.squared_norm(); }, params, analytic, o);
  EXPECT_EQ(r.coordinates_checked, 50u);
  EXPECT_LT(r.max_relative_error, 1e-6);
}

TEST(GradientCheck, NonFiniteLoss) {
  Tensor theta({1}, 0.0);
  Tensor* params[] = {&theta};
  const Tensor analytic[] = {Tensor({1})};
  try {
    gradient_check([&] { return std::log(theta[0]); }, params, analytic);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteLoss);
  }
}

TEST(GradientCheck, RelativeErrorFloor) {
  EXPECT_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
}
