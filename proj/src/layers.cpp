#include "vulndet/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "vulndet/error.hpp"

namespace vulndet {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;

ConstMatrixMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatrixMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MatrixMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatrixMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw Error(ErrorCode::ShapeMismatch, std::string(what) + ": expected rank " +
                                              std::to_string(rank) + ", got " +
                                              shape_string(t.shape()));
  }
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Lout x (C*k) patch matrix of one sample; column c*k + j holds x[t + j, c].
void im2col(const double* x, std::size_t channels, std::size_t k, std::size_t out_len, double* col) {
  for (std::size_t t = 0; t < out_len; ++t) {
    double* row = col + t * channels * k;
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t j = 0; j < k; ++j) row[c * k + j] = x[(t + j) * channels + c];
    }
  }
}

void col2im_add(const double* col, std::size_t channels, std::size_t k, std::size_t out_len, double* x) {
  for (std::size_t t = 0; t < out_len; ++t) {
    const double* row = col + t * channels * k;
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t j = 0; j < k; ++j) x[(t + j) * channels + c] += row[c * k + j];
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- embedding

Tensor embedding_forward(const Tensor& ids, const Tensor& table) {
  require_rank(ids, 2, "embedding ids");
  require_rank(table, 2, "embedding table");
  const std::size_t vocab = table.dim(0);
  const std::size_t dim = table.dim(1);
  Tensor out({ids.dim(0), ids.dim(1), dim});
  for (std::size_t n = 0; n < ids.size(); ++n) {
    const double raw = ids[n];
    if (raw < 0 || raw >= static_cast<double>(vocab) || raw != std::floor(raw)) {
      throw Error(ErrorCode::IdOutOfRange, "embedding id " + std::to_string(raw) +
                                               " outside table of " + std::to_string(vocab) + " rows");
    }
    const auto id = static_cast<std::size_t>(raw);
    std::copy_n(table.data() + id * dim, dim, out.data() + n * dim);
  }
  return out;
}

Tensor embedding_backward(const Tensor& upstream, const Tensor& ids, const Shape& table_shape) {
  const std::size_t dim = table_shape.at(1);
  require_shape(upstream, {ids.dim(0), ids.dim(1), dim}, "embedding upstream");
  Tensor grad(table_shape);
  for (std::size_t n = 0; n < ids.size(); ++n) {
    const auto id = static_cast<std::size_t>(ids[n]);
    double* row = grad.data() + id * dim;
    const double* g = upstream.data() + n * dim;
    for (std::size_t j = 0; j < dim; ++j) row[j] += g[j];
  }
  return grad;
}

// ------------------------------------------------------------------- conv1d

Tensor conv1d_forward(const Tensor& input, const Conv1DParams& params) {
  require_rank(input, 3, "conv1d input");
  require_rank(params.weights, 3, "conv1d weights");
  const std::size_t batch = input.dim(0), len = input.dim(1), channels = input.dim(2);
  const std::size_t filters = params.weights.dim(0), k = params.weights.dim(2);
  if (params.weights.dim(1) != channels) {
    throw Error(ErrorCode::ShapeMismatch, "conv1d weights " + shape_string(params.weights.shape()) +
                                              " do not match input " + shape_string(input.shape()));
  }
  require_shape(params.bias, {filters}, "conv1d bias");
  if (len < k) {
    throw Error(ErrorCode::InputTooShort, "conv1d input length " + std::to_string(len) +
                                              " shorter than kernel " + std::to_string(k));
  }
  const std::size_t out_len = len - k + 1;
  const std::size_t patch = channels * k;
  Tensor out({batch, out_len, filters});
  const auto w = as_matrix(params.weights, filters, patch);
  const auto bias = ConstVectorMap(params.bias.data(), static_cast<Eigen::Index>(filters));
  RowMatrix col(static_cast<Eigen::Index>(out_len), static_cast<Eigen::Index>(patch));
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(input.data() + b * len * channels, channels, k, out_len, col.data());
    MatrixMap y(out.data() + b * out_len * filters, static_cast<Eigen::Index>(out_len),
                static_cast<Eigen::Index>(filters));
    y.noalias() = col * w.transpose();
    y.rowwise() += bias.transpose();
  }
  return out;
}

Conv1DGrads conv1d_backward(const Tensor& upstream, const Tensor& input, const Conv1DParams& params) {
  const std::size_t batch = input.dim(0), len = input.dim(1), channels = input.dim(2);
  const std::size_t filters = params.weights.dim(0), k = params.weights.dim(2);
  const std::size_t out_len = len - k + 1;
  const std::size_t patch = channels * k;
  require_shape(upstream, {batch, out_len, filters}, "conv1d upstream");

  Conv1DGrads grads{Tensor(input.shape()), Tensor(params.weights.shape()), Tensor(params.bias.shape())};
  const auto w = as_matrix(params.weights, filters, patch);
  auto dw = as_matrix(grads.weights, filters, patch);
  auto db = VectorMap(grads.bias.data(), static_cast<Eigen::Index>(filters));
  RowMatrix col(static_cast<Eigen::Index>(out_len), static_cast<Eigen::Index>(patch));
  RowMatrix dcol(static_cast<Eigen::Index>(out_len), static_cast<Eigen::Index>(patch));
  for (std::size_t b = 0; b < batch; ++b) {
    const auto dy = ConstMatrixMap(upstream.data() + b * out_len * filters,
                                   static_cast<Eigen::Index>(out_len), static_cast<Eigen::Index>(filters));
    im2col(input.data() + b * len * channels, channels, k, out_len, col.data());
    dw.noalias() += dy.transpose() * col;
    db += dy.colwise().sum().transpose();
    dcol.noalias() = dy * w;
    col2im_add(dcol.data(), channels, k, out_len, grads.input.data() + b * len * channels);
  }
  return grads;
}

// ------------------------------------------------------------------ maxpool

MaxPoolResult maxpool1d_forward(const Tensor& input, std::size_t window, std::size_t stride) {
  require_rank(input, 3, "maxpool input");
  if (window == 0 || stride == 0) throw Error(ErrorCode::InvalidArgument, "maxpool window and stride must be positive");
  const std::size_t batch = input.dim(0), len = input.dim(1), channels = input.dim(2);
  if (len < window) {
    throw Error(ErrorCode::InputTooShort, "maxpool input length " + std::to_string(len) +
                                              " shorter than window " + std::to_string(window));
  }
  const std::size_t out_len = (len - window) / stride + 1;
  MaxPoolResult result{Tensor({batch, out_len, channels}), {input.shape(), {}}};
  result.cache.argmax.resize(result.output.size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < out_len; ++t) {
      for (std::size_t c = 0; c < channels; ++c) {
        std::size_t best = (b * len + t * stride) * channels + c;
        for (std::size_t j = 1; j < window; ++j) {
          const std::size_t idx = (b * len + t * stride + j) * channels + c;
          if (input[idx] > input[best]) best = idx;
        }
        const std::size_t o = (b * out_len + t) * channels + c;
        result.output[o] = input[best];
        result.cache.argmax[o] = best;
      }
    }
  }
  return result;
}

Tensor maxpool1d_backward(const Tensor& upstream, const MaxPoolCache& cache) {
  if (upstream.size() != cache.argmax.size()) {
    throw Error(ErrorCode::ShapeMismatch, "maxpool upstream " + shape_string(upstream.shape()) +
                                              " does not match cached forward");
  }
  Tensor grad(cache.input_shape);
  for (std::size_t o = 0; o < upstream.size(); ++o) grad[cache.argmax[o]] += upstream[o];
  return grad;
}

// --------------------------------------------------------------------- lstm

LstmResult lstm_forward(const Tensor& input, const LstmParams& params, bool return_sequences) {
  require_rank(input, 3, "lstm input");
  const std::size_t batch = input.dim(0), len = input.dim(1), in_dim = input.dim(2);
  const std::size_t hidden = params.hidden();
  const std::size_t gates_dim = 4 * hidden;
  require_shape(params.input_weights, {gates_dim, in_dim}, "lstm input weights");
  require_shape(params.recurrent_weights, {gates_dim, hidden}, "lstm recurrent weights");

  LstmResult result;
  LstmCache& cache = result.cache;
  cache.input = input;
  cache.return_sequences = return_sequences;
  cache.gates = Tensor({batch, len, gates_dim});
  cache.cells = Tensor({batch, len + 1, hidden});
  cache.hidden = Tensor({batch, len + 1, hidden});

  // Input projections for every (sample, step) at once.
  const auto x = as_matrix(input, batch * len, in_dim);
  const auto w = as_matrix(params.input_weights, gates_dim, in_dim);
  const auto u = as_matrix(params.recurrent_weights, gates_dim, hidden);
  const auto bias = ConstVectorMap(params.bias.data(), static_cast<Eigen::Index>(gates_dim));
  auto pre = as_matrix(cache.gates, batch * len, gates_dim);
  pre.noalias() = x * w.transpose();
  pre.rowwise() += bias.transpose();

  RowMatrix h_prev(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(hidden));
  RowMatrix recur(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(gates_dim));
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t j = 0; j < hidden; ++j) {
        h_prev(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j)) = cache.hidden.at(b, t, j);
      }
    }
    recur.noalias() = h_prev * u.transpose();
    for (std::size_t b = 0; b < batch; ++b) {
      double* z = cache.gates.data() + (b * len + t) * gates_dim;
      for (std::size_t j = 0; j < gates_dim; ++j) {
        z[j] += recur(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j));
      }
      for (std::size_t j = 0; j < hidden; ++j) {
        const double ig = sigmoid(z[j]);
        const double fg = sigmoid(z[hidden + j]);
        const double gg = std::tanh(z[2 * hidden + j]);
        const double og = sigmoid(z[3 * hidden + j]);
        z[j] = ig;
        z[hidden + j] = fg;
        z[2 * hidden + j] = gg;
        z[3 * hidden + j] = og;
        const double c = fg * cache.cells.at(b, t, j) + ig * gg;
        cache.cells.at(b, t + 1, j) = c;
        cache.hidden.at(b, t + 1, j) = og * std::tanh(c);
      }
    }
  }

  if (return_sequences) {
    result.output = Tensor({batch, len, hidden});
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(cache.hidden.data() + (b * (len + 1) + 1) * hidden, len * hidden,
                  result.output.data() + b * len * hidden);
    }
  } else {
    result.output = Tensor({batch, hidden});
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(cache.hidden.data() + (b * (len + 1) + len) * hidden, hidden,
                  result.output.data() + b * hidden);
    }
  }
  return result;
}

LstmGrads lstm_backward(const Tensor& upstream, const LstmCache& cache, const LstmParams& params) {
  const std::size_t batch = cache.input.dim(0), len = cache.input.dim(1), in_dim = cache.input.dim(2);
  const std::size_t hidden = params.hidden();
  const std::size_t gates_dim = 4 * hidden;
  if (cache.return_sequences) {
    require_shape(upstream, {batch, len, hidden}, "lstm upstream");
  } else {
    require_shape(upstream, {batch, hidden}, "lstm upstream");
  }

  LstmGrads grads{Tensor(cache.input.shape()), Tensor(params.input_weights.shape()),
                  Tensor(params.recurrent_weights.shape()), Tensor(params.bias.shape())};
  Tensor dz_all({batch, len, gates_dim});
  RowMatrix dh(RowMatrix::Zero(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(hidden)));
  RowMatrix dc(RowMatrix::Zero(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(hidden)));
  RowMatrix dz(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(gates_dim));
  RowMatrix h_prev(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(hidden));
  const auto u = as_matrix(params.recurrent_weights, gates_dim, hidden);
  auto du = as_matrix(grads.recurrent_weights, gates_dim, hidden);

  for (std::size_t step = len; step-- > 0;) {
    for (std::size_t b = 0; b < batch; ++b) {
      const auto bi = static_cast<Eigen::Index>(b);
      const double* g = cache.gates.data() + (b * len + step) * gates_dim;
      for (std::size_t j = 0; j < hidden; ++j) {
        const auto ji = static_cast<Eigen::Index>(j);
        double dh_bj = dh(bi, ji);
        if (cache.return_sequences) {
          dh_bj += upstream.at(b, step, j);
        } else if (step + 1 == len) {
          dh_bj += upstream.at(b, j);
        }
        const double ig = g[j], fg = g[hidden + j], gg = g[2 * hidden + j], og = g[3 * hidden + j];
        const double c = cache.cells.at(b, step + 1, j);
        const double c_prev = cache.cells.at(b, step, j);
        const double tc = std::tanh(c);
        const double dc_bj = dc(bi, ji) + dh_bj * og * (1.0 - tc * tc);
        dz(bi, ji) = dc_bj * gg * ig * (1.0 - ig);
        dz(bi, static_cast<Eigen::Index>(hidden + j)) = dc_bj * c_prev * fg * (1.0 - fg);
        dz(bi, static_cast<Eigen::Index>(2 * hidden + j)) = dc_bj * ig * (1.0 - gg * gg);
        dz(bi, static_cast<Eigen::Index>(3 * hidden + j)) = dh_bj * tc * og * (1.0 - og);
        dc(bi, ji) = dc_bj * fg;
        h_prev(bi, ji) = cache.hidden.at(b, step, j);
      }
      std::copy_n(dz.data() + b * gates_dim, gates_dim, dz_all.data() + (b * len + step) * gates_dim);
    }
    du.noalias() += dz.transpose() * h_prev;
    dh.noalias() = dz * u;
  }

  const auto dz_mat = as_matrix(dz_all, batch * len, gates_dim);
  const auto x = as_matrix(cache.input, batch * len, in_dim);
  const auto w = as_matrix(params.input_weights, gates_dim, in_dim);
  as_matrix(grads.input_weights, gates_dim, in_dim).noalias() = dz_mat.transpose() * x;
  as_matrix(grads.input, batch * len, in_dim).noalias() = dz_mat * w;
  VectorMap(grads.bias.data(), static_cast<Eigen::Index>(gates_dim)) = dz_mat.colwise().sum().transpose();
  return grads;
}

// ---------------------------------------------------------------- batchnorm

BatchNormResult batchnorm_train(const Tensor& input, BatchNormParams& params) {
  if (input.rank() < 2) throw Error(ErrorCode::ShapeMismatch, "batchnorm input needs rank >= 2");
  const std::size_t features = input.shape().back();
  const std::size_t rows = input.size() / features;
  require_shape(params.gamma, {features}, "batchnorm gamma");
  if (rows < 2) {
    throw Error(ErrorCode::BatchTooSmall, "batchnorm train mode needs at least 2 rows, got " +
                                              std::to_string(rows));
  }
  const auto x = as_matrix(input, rows, features);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const RowMatrix centered = x.rowwise() - mean;
  const Eigen::RowVectorXd var = centered.array().square().colwise().sum() / static_cast<double>(rows);

  BatchNormResult result{Tensor(input.shape()), {Tensor(input.shape()), std::vector<double>(features)}};
  auto xhat = as_matrix(result.cache.normalized, rows, features);
  auto y = as_matrix(result.output, rows, features);
  const double unbias = static_cast<double>(rows) / static_cast<double>(rows - 1);
  for (std::size_t f = 0; f < features; ++f) {
    const auto fi = static_cast<Eigen::Index>(f);
    const double inv_std = 1.0 / std::sqrt(var(fi) + params.eps);
    result.cache.inv_std[f] = inv_std;
    xhat.col(fi) = centered.col(fi) * inv_std;
    y.col(fi) = xhat.col(fi) * params.gamma[f];
    y.col(fi).array() += params.beta[f];
    params.running_mean[f] = (1.0 - params.momentum) * params.running_mean[f] + params.momentum * mean(fi);
    params.running_var[f] =
        (1.0 - params.momentum) * params.running_var[f] + params.momentum * var(fi) * unbias;
  }
  return result;
}

Tensor batchnorm_eval(const Tensor& input, const BatchNormParams& params) {
  const std::size_t features = input.shape().back();
  require_shape(params.gamma, {features}, "batchnorm gamma");
  Tensor out(input.shape());
  for (std::size_t n = 0; n < input.size(); ++n) {
    const std::size_t f = n % features;
    out[n] = params.gamma[f] * (input[n] - params.running_mean[f]) /
                 std::sqrt(params.running_var[f] + params.eps) +
             params.beta[f];
  }
  return out;
}

BatchNormGrads batchnorm_backward(const Tensor& upstream, const BatchNormCache& cache,
                                  const BatchNormParams& params) {
  require_shape(upstream, cache.normalized.shape(), "batchnorm upstream");
  const std::size_t features = upstream.shape().back();
  const std::size_t rows = upstream.size() / features;
  BatchNormGrads grads{Tensor(upstream.shape()), Tensor({features}), Tensor({features})};
  const auto dy = as_matrix(upstream, rows, features);
  const auto xhat = as_matrix(cache.normalized, rows, features);
  auto dx = as_matrix(grads.input, rows, features);
  const double n = static_cast<double>(rows);
  for (std::size_t f = 0; f < features; ++f) {
    const auto fi = static_cast<Eigen::Index>(f);
    const double dbeta = dy.col(fi).sum();
    const double dgamma = dy.col(fi).dot(xhat.col(fi));
    grads.beta[f] = dbeta;
    grads.gamma[f] = dgamma;
    // dxhat = dy * gamma; dx = inv_std / n * (n dxhat - sum dxhat - xhat sum(dxhat xhat))
    const double scale = params.gamma[f] * cache.inv_std[f] / n;
    dx.col(fi) = scale * (n * dy.col(fi).array() - dbeta - xhat.col(fi).array() * dgamma).matrix();
  }
  return grads;
}

// -------------------------------------------------------------------- dense

Tensor dense_forward(const Tensor& input, const DenseParams& params) {
  require_rank(input, 2, "dense input");
  const std::size_t batch = input.dim(0), in_dim = input.dim(1);
  const std::size_t out_dim = params.weights.dim(0);
  require_shape(params.weights, {out_dim, in_dim}, "dense weights");
  require_shape(params.bias, {out_dim}, "dense bias");
  Tensor out({batch, out_dim});
  auto y = as_matrix(out, batch, out_dim);
  y.noalias() = as_matrix(input, batch, in_dim) * as_matrix(params.weights, out_dim, in_dim).transpose();
  y.rowwise() += ConstVectorMap(params.bias.data(), static_cast<Eigen::Index>(out_dim)).transpose();
  return out;
}

DenseGrads dense_backward(const Tensor& upstream, const Tensor& input, const DenseParams& params) {
  const std::size_t batch = input.dim(0), in_dim = input.dim(1);
  const std::size_t out_dim = params.weights.dim(0);
  require_shape(upstream, {batch, out_dim}, "dense upstream");
  DenseGrads grads{Tensor(input.shape()), Tensor(params.weights.shape()), Tensor(params.bias.shape())};
  const auto dy = as_matrix(upstream, batch, out_dim);
  as_matrix(grads.input, batch, in_dim).noalias() = dy * as_matrix(params.weights, out_dim, in_dim);
  as_matrix(grads.weights, out_dim, in_dim).noalias() = dy.transpose() * as_matrix(input, batch, in_dim);
  VectorMap(grads.bias.data(), static_cast<Eigen::Index>(out_dim)) = dy.colwise().sum().transpose();
  return grads;
}

// -------------------------------------------------------------- activations

const char* to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Softmax: return "softmax";
    case Activation::ScaledTanh: return "scaled_tanh";
  }
  return "?";
}

Tensor activate(const Tensor& x, Activation kind) {
  Tensor y(x.shape());
  switch (kind) {
    case Activation::Relu:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0 ? x[i] : 0.0;
      break;
    case Activation::Tanh:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
      break;
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
      break;
    case Activation::ScaledTanh:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = 0.5 * (std::tanh(x[i]) + 1.0);
      break;
    case Activation::Softmax: {
      const std::size_t cols = x.shape().back();
      for (std::size_t r = 0; r < x.size() / cols; ++r) {
        const double* in = x.data() + r * cols;
        double* out = y.data() + r * cols;
        const double peak = *std::max_element(in, in + cols);
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) total += out[c] = std::exp(in[c] - peak);
        for (std::size_t c = 0; c < cols; ++c) out[c] /= total;
      }
      break;
    }
  }
  return y;
}

Tensor activation_backward(const Tensor& upstream, const Tensor& output, Activation kind) {
  require_shape(upstream, output.shape(), "activation upstream");
  Tensor dx(output.shape());
  switch (kind) {
    case Activation::Relu:
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = output[i] > 0 ? upstream[i] : 0.0;
      break;
    case Activation::Tanh:
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = upstream[i] * (1.0 - output[i] * output[i]);
      break;
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = upstream[i] * output[i] * (1.0 - output[i]);
      break;
    case Activation::ScaledTanh:
      for (std::size_t i = 0; i < dx.size(); ++i) {
        const double t = 2.0 * output[i] - 1.0;
        dx[i] = upstream[i] * 0.5 * (1.0 - t * t);
      }
      break;
    case Activation::Softmax: {
      const std::size_t cols = output.shape().back();
      for (std::size_t r = 0; r < output.size() / cols; ++r) {
        const double* y = output.data() + r * cols;
        const double* g = upstream.data() + r * cols;
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += g[c] * y[c];
        for (std::size_t c = 0; c < cols; ++c) dx[r * cols + c] = y[c] * (g[c] - dot);
      }
      break;
    }
  }
  return dx;
}

// ------------------------------------------------------------------- losses

LossResult bce_loss(const Tensor& targets, const Tensor& probabilities) {
  require_shape(targets, probabilities.shape(), "bce targets");
  LossResult result{0.0, Tensor(probabilities.shape())};
  const double n = static_cast<double>(probabilities.size());
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const double p = std::clamp(probabilities[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    const double t = targets[i];
    result.value -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    result.gradient[i] = (-t / p + (1.0 - t) / (1.0 - p)) / n;
  }
  result.value /= n;
  return result;
}

LossResult cce_loss(const Tensor& targets, const Tensor& probabilities) {
  require_rank(probabilities, 2, "cce probabilities");
  require_shape(targets, probabilities.shape(), "cce targets");
  const std::size_t rows = probabilities.dim(0), cols = probabilities.dim(1);
  LossResult result{0.0, Tensor(probabilities.shape())};
  for (std::size_t r = 0; r < rows; ++r) {
    double row_sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) row_sum += probabilities.at(r, c);
    if (std::abs(row_sum - 1.0) > 1e-6) {
      throw Error(ErrorCode::NotNormalized,
                  "row " + std::to_string(r) + " sums to " + std::to_string(row_sum));
    }
    for (std::size_t c = 0; c < cols; ++c) {
      const double t = targets.at(r, c);
      if (t == 0.0) continue;
      const double p = std::max(probabilities.at(r, c), kProbabilityClamp);
      result.value -= t * std::log(p);
      result.gradient.at(r, c) = -t / p / static_cast<double>(rows);
    }
  }
  result.value /= static_cast<double>(rows);
  return result;
}

}  // namespace vulndet
