#include "vulndet/optim.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>

#include "vulndet/error.hpp"

namespace vulndet {

std::string_view to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::Sgd: return "sgd";
    case OptimizerKind::Adam: return "adam";
    case OptimizerKind::RmsProp: return "rmsprop";
    case OptimizerKind::Adagrad: return "adagrad";
  }
  return "?";
}

OptimizerKind parse_optimizer(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (auto kind : {OptimizerKind::Sgd, OptimizerKind::Adam, OptimizerKind::RmsProp, OptimizerKind::Adagrad}) {
    if (lower == to_string(kind)) return kind;
  }
  throw Error(ErrorCode::InvalidArgument,
              "unknown optimizer '" + std::string(name) + "' (valid: sgd, adam, rmsprop, adagrad)");
}

Optimizer::Optimizer(OptimizerConfig config) : config_(config) {
  if (!(config_.learning_rate > 0)) {
    throw Error(ErrorCode::InvalidArgument, "learning rate must be positive");
  }
}

void Optimizer::step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) {
    throw Error(ErrorCode::ShapeMismatch, std::to_string(params.size()) + " parameters but " +
                                              std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) require_shape(grads[i], params[i]->shape(), "gradient");
  if (steps_ == 0) {
    for (auto* p : params) {
      first_.emplace_back(p->shape());
      second_.emplace_back(p->shape());
    }
  } else if (second_.size() != params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "optimizer state was built for a different parameter list");
  }
  ++steps_;

  double scale = 1.0;
  if (config_.clip_norm > 0) {
    double sq = 0.0;
    for (const auto& g : grads) sq += g.squared_norm();
    const double norm = std::sqrt(sq);
    if (norm > config_.clip_norm) scale = config_.clip_norm / norm;
  }

  const double lr = config_.learning_rate;
  const double eps = config_.eps;
  const double t = static_cast<double>(steps_);
  const double bc1 = 1.0 - std::pow(config_.beta1, t);
  const double bc2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    require_shape(second_[i], p.shape(), "optimizer state");
    const Tensor& g = grads[i];
    Tensor& m = first_[i];
    Tensor& s = second_[i];
    for (std::size_t n = 0; n < p.size(); ++n) {
      const double gn = g[n] * scale;
      switch (config_.kind) {
        case OptimizerKind::Sgd:
          p[n] -= lr * gn;
          break;
        case OptimizerKind::Adam: {
          m[n] = config_.beta1 * m[n] + (1.0 - config_.beta1) * gn;
          s[n] = config_.beta2 * s[n] + (1.0 - config_.beta2) * gn * gn;
          const double m_hat = m[n] / bc1;
          const double v_hat = s[n] / bc2;
          p[n] -= lr * m_hat / (std::sqrt(v_hat) + eps);
          break;
        }
        case OptimizerKind::RmsProp:
          s[n] = config_.rho * s[n] + (1.0 - config_.rho) * gn * gn;
          p[n] -= lr * gn / (std::sqrt(s[n]) + eps);
          break;
        case OptimizerKind::Adagrad:
          s[n] += gn * gn;
          p[n] -= lr * gn / (std::sqrt(s[n]) + eps);
          break;
      }
    }
  }
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-12});
}

GradientCheckResult gradient_check(const std::function<double()>& loss,
                                   std::span<Tensor* const> params,
                                   std::span<const Tensor> analytic,
                                   const GradientCheckOptions& options) {
  if (params.size() != analytic.size()) {
    throw Error(ErrorCode::ShapeMismatch, "gradient check: parameter/gradient count differs");
  }
  if (!(options.step > 0)) throw Error(ErrorCode::InvalidArgument, "gradient check step must be positive");
  std::mt19937_64 rng(options.seed);
  GradientCheckResult result;
  for (std::size_t ti = 0; ti < params.size(); ++ti) {
    Tensor& p = *params[ti];
    require_shape(analytic[ti], p.shape(), "gradient check");
    std::vector<std::size_t> coords(p.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    const std::size_t limit =
        options.max_coordinates_per_tensor == 0 ? 0 : std::max<std::size_t>(options.max_coordinates_per_tensor, 50);
    if (limit != 0 && coords.size() > limit) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(limit);
    }
    for (auto idx : coords) {
      const double original = p[idx];
      p[idx] = original + options.step;
      const double plus = loss();
      p[idx] = original - options.step;
      const double minus = loss();
      p[idx] = original;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw Error(ErrorCode::NonFiniteLoss, "loss is not finite while perturbing tensor " +
                                                  std::to_string(ti) + " index " + std::to_string(idx));
      }
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double err = relative_error(analytic[ti][idx], numeric);
      ++result.coordinates_checked;
      if (result.coordinates_checked == 1 || err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_tensor = ti;
        result.worst_index = idx;
        result.analytic = analytic[ti][idx];
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace vulndet
