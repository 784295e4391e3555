#pragma once

// Forward and backward kernels for every layer, activation and loss used by
// the two classifiers. Kernels are pure functions of (input, parameters);
// whatever the backward pass needs is returned from the forward pass as a
// cache value.
//
// Sequence tensors are laid out batch x time x channels (B x L x C).

#include <cstddef>
#include <vector>

#include "vulndet/tensor.hpp"

namespace vulndet {

enum class Mode { Train, Eval };

// ---------------------------------------------------------------- embedding

/// ids: B x L tensor holding integral ids; table: V x d. Returns B x L x d.
Tensor embedding_forward(const Tensor& ids, const Tensor& table);

/// Scatter-adds the upstream B x L x d gradient into a table-shaped gradient.
Tensor embedding_backward(const Tensor& upstream, const Tensor& ids, const Shape& table_shape);

// ------------------------------------------------------------------- conv1d

/// weights F x C x k, bias F. Stride 1, no padding.
struct Conv1DParams {
  Tensor weights;
  Tensor bias;
};

struct Conv1DGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

Tensor conv1d_forward(const Tensor& input, const Conv1DParams& params);
Conv1DGrads conv1d_backward(const Tensor& upstream, const Tensor& input, const Conv1DParams& params);

// ------------------------------------------------------------------ maxpool

struct MaxPoolCache {
  Shape input_shape;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

struct MaxPoolResult {
  Tensor output;
  MaxPoolCache cache;
};

/// Max over each window along the time axis; ties resolve to the first index.
MaxPoolResult maxpool1d_forward(const Tensor& input, std::size_t window, std::size_t stride);
Tensor maxpool1d_backward(const Tensor& upstream, const MaxPoolCache& cache);

// --------------------------------------------------------------------- lstm

/// Packed gate layout along the 4H axis is [input, forget, candidate, output].
struct LstmParams {
  Tensor input_weights;      // 4H x D
  Tensor recurrent_weights;  // 4H x H
  Tensor bias;               // 4H

  std::size_t hidden() const { return bias.size() / 4; }
};

struct LstmCache {
  Tensor input;   // B x L x D
  Tensor gates;   // B x L x 4H, post-activation
  Tensor cells;   // B x (L+1) x H, index 0 is the zero initial state
  Tensor hidden;  // B x (L+1) x H
  bool return_sequences = true;
};

struct LstmResult {
  Tensor output;  // B x L x H, or B x H for the last step only
  LstmCache cache;
};

struct LstmGrads {
  Tensor input;
  Tensor input_weights;
  Tensor recurrent_weights;
  Tensor bias;
};

LstmResult lstm_forward(const Tensor& input, const LstmParams& params, bool return_sequences);
LstmGrads lstm_backward(const Tensor& upstream, const LstmCache& cache, const LstmParams& params);

// ---------------------------------------------------------------- batchnorm

/// Normalizes over every axis but the last. Running statistics follow
/// running = (1 - momentum) * running + momentum * batch, with the unbiased
/// batch variance.
struct BatchNormParams {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  double eps = 1e-5;
  double momentum = 0.1;
};

struct BatchNormCache {
  Tensor normalized;
  std::vector<double> inv_std;
};

struct BatchNormResult {
  Tensor output;
  BatchNormCache cache;
};

struct BatchNormGrads {
  Tensor input;
  Tensor gamma;
  Tensor beta;
};

/// Train mode uses batch statistics and updates the running ones; it needs at
/// least two rows per feature (BatchTooSmall otherwise).
BatchNormResult batchnorm_train(const Tensor& input, BatchNormParams& params);
Tensor batchnorm_eval(const Tensor& input, const BatchNormParams& params);
BatchNormGrads batchnorm_backward(const Tensor& upstream, const BatchNormCache& cache,
                                  const BatchNormParams& params);

// -------------------------------------------------------------------- dense

struct DenseParams {
  Tensor weights;  // O x I
  Tensor bias;     // O
};

struct DenseGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

Tensor dense_forward(const Tensor& input, const DenseParams& params);
DenseGrads dense_backward(const Tensor& upstream, const Tensor& input, const DenseParams& params);

// -------------------------------------------------------------- activations

/// ScaledTanh is (tanh(x) + 1) / 2, a tanh head mapped into (0, 1).
enum class Activation { Relu, Tanh, Sigmoid, Softmax, ScaledTanh };

const char* to_string(Activation a);

/// Elementwise, except Softmax which runs over the last axis.
Tensor activate(const Tensor& x, Activation kind);

/// Gradient with respect to the activation input, given its output.
Tensor activation_backward(const Tensor& upstream, const Tensor& output, Activation kind);

// ------------------------------------------------------------------- losses

inline constexpr double kProbabilityClamp = 1e-7;

struct LossResult {
  double value = 0.0;
  Tensor gradient;  // d loss / d probabilities
};

/// Mean binary cross-entropy over every element; probabilities are clamped to
/// [eps, 1 - eps] and the gradient is taken at the clamped value.
LossResult bce_loss(const Tensor& targets, const Tensor& probabilities);

/// Mean over rows of -sum_c t_c log p_c. Rows of p must sum to 1 within 1e-6.
LossResult cce_loss(const Tensor& targets, const Tensor& probabilities);

}  // namespace vulndet
