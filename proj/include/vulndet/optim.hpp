#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vulndet/tensor.hpp"

namespace vulndet {

enum class OptimizerKind { Sgd, Adam, RmsProp, Adagrad };

std::string_view to_string(OptimizerKind kind);

/// Accepts "sgd", "adam", "rmsprop", "adagrad" (case-insensitive); throws
/// InvalidArgument listing the valid choices otherwise.
OptimizerKind parse_optimizer(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double rho = 0.9;
  double eps = 1e-8;
  double clip_norm = 0.0;  // global-norm clipping threshold, 0 disables
};

/// Update rule plus its per-parameter state (moments / accumulators).
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  /// Applies one update in place. State is allocated on the first call and
  /// must stay shape-congruent with `params` afterwards.
  void step(std::span<Tensor* const> params, std::span<const Tensor> grads);

  const OptimizerConfig& config() const { return config_; }
  std::size_t step_count() const { return steps_; }

 private:
  OptimizerConfig config_;
  std::size_t steps_ = 0;
  std::vector<Tensor> first_;   // Adam m
  std::vector<Tensor> second_;  // Adam v, RMSprop mean square, Adagrad sum of squares
};

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

struct GradientCheckOptions {
  double step = 1e-5;
  // Tensors larger than this are checked on a random subset of this many
  // coordinates (at least 50); 0 checks every coordinate.
  std::size_t max_coordinates_per_tensor = 0;
  std::uint64_t seed = 7;
};

/// Compares analytic gradients with central differences
/// (f(x + h) - f(x - h)) / 2h. `loss` must read the parameters through the
/// pointers it was given; they are perturbed in place and restored.
/// Relative error is |a - n| / max(|a|, |n|, 1e-12). Throws NonFiniteLoss.
GradientCheckResult gradient_check(const std::function<double()>& loss,
                                   std::span<Tensor* const> params,
                                   std::span<const Tensor> analytic,
                                   const GradientCheckOptions& options = {});

double relative_error(double analytic, double numeric);

}  // namespace vulndet
