#include "vulndet/model.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace vulndet {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

const char* kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv1D: return "conv1d";
    case LayerKind::MaxPool1D: return "maxpool";
    case LayerKind::Activation: return "activation";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Lstm: return "lstm";
    case LayerKind::Dense: return "dense";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  for (auto a : {Activation::Relu, Activation::Tanh, Activation::Sigmoid, Activation::Softmax,
                 Activation::ScaledTanh}) {
    if (name == to_string(a)) return a;
  }
  throw Error(ErrorCode::SpecCorrupt, "unknown activation '" + std::string(name) + "'");
}

std::size_t parse_count(const std::map<std::string, std::string>& fields, const std::string& key) {
  auto it = fields.find(key);
  if (it == fields.end()) throw Error(ErrorCode::SpecCorrupt, "layer is missing '" + key + "'");
  try {
    std::size_t used = 0;
    const auto value = std::stoull(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing characters");
    return static_cast<std::size_t>(value);
  } catch (const std::exception&) {
    throw Error(ErrorCode::SpecCorrupt, "bad value '" + it->second + "' for '" + key + "'");
  }
}

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace

// ---------------------------------------------------------------- LayerSpec

LayerSpec LayerSpec::conv1d(std::size_t filters, std::size_t kernel) {
  LayerSpec s;
  s.kind = LayerKind::Conv1D;
  s.units = filters;
  s.kernel = kernel;
  return s;
}

LayerSpec LayerSpec::maxpool(std::size_t window, std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::MaxPool1D;
  s.window = window;
  s.stride = stride;
  return s;
}

LayerSpec LayerSpec::act(Activation kind) {
  LayerSpec s;
  s.kind = LayerKind::Activation;
  s.activation = kind;
  return s;
}

LayerSpec LayerSpec::batchnorm() {
  LayerSpec s;
  s.kind = LayerKind::BatchNorm;
  return s;
}

LayerSpec LayerSpec::flatten() { return LayerSpec{}; }

LayerSpec LayerSpec::lstm(std::size_t cells, bool return_sequences) {
  LayerSpec s;
  s.kind = LayerKind::Lstm;
  s.units = cells;
  s.return_sequences = return_sequences;
  return s;
}

LayerSpec LayerSpec::dense(std::size_t outputs) {
  LayerSpec s;
  s.kind = LayerKind::Dense;
  s.units = outputs;
  return s;
}

std::string LayerSpec::to_text() const {
  std::string out = kind_name(kind);
  switch (kind) {
    case LayerKind::Conv1D:
      out += " filters=" + std::to_string(units) + " kernel=" + std::to_string(kernel);
      break;
    case LayerKind::MaxPool1D:
      out += " window=" + std::to_string(window) + " stride=" + std::to_string(stride);
      break;
    case LayerKind::Activation:
      out += std::string(" kind=") + to_string(activation);
      break;
    case LayerKind::Lstm:
      out += " cells=" + std::to_string(units) + " return_sequences=" + (return_sequences ? "1" : "0");
      break;
    case LayerKind::Dense:
      out += " units=" + std::to_string(units);
      break;
    case LayerKind::BatchNorm:
    case LayerKind::Flatten:
      break;
  }
  return out;
}

LayerSpec LayerSpec::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string name;
  in >> name;
  std::map<std::string, std::string> fields;
  std::string field;
  while (in >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::SpecCorrupt, "bad layer field '" + field + "'");
    fields[field.substr(0, eq)] = field.substr(eq + 1);
  }
  if (name == "conv1d") return conv1d(parse_count(fields, "filters"), parse_count(fields, "kernel"));
  if (name == "maxpool") return maxpool(parse_count(fields, "window"), parse_count(fields, "stride"));
  if (name == "activation") {
    auto it = fields.find("kind");
    if (it == fields.end()) throw Error(ErrorCode::SpecCorrupt, "activation layer without kind");
    return act(parse_activation(it->second));
  }
  if (name == "batchnorm") return batchnorm();
  if (name == "flatten") return flatten();
  if (name == "lstm") {
    const auto rs = parse_count(fields, "return_sequences");
    if (rs > 1) throw Error(ErrorCode::SpecCorrupt, "return_sequences must be 0 or 1");
    return lstm(parse_count(fields, "cells"), rs == 1);
  }
  if (name == "dense") return dense(parse_count(fields, "units"));
  throw Error(ErrorCode::SpecCorrupt, "unknown layer kind '" + name + "'");
}

// ---------------------------------------------------------------- ModelSpec

ModelSpec ModelSpec::stage1(std::size_t vocab_size, bool tanh_head) {
  ModelSpec s;
  s.stage = 1;
  s.input_length = 500;
  s.vocab_size = vocab_size;
  s.embedding_dim = 13;
  s.layers = {LayerSpec::conv1d(256, 7),   LayerSpec::act(Activation::Relu), LayerSpec::maxpool(2, 2),
              LayerSpec::conv1d(128, 7),   LayerSpec::act(Activation::Relu), LayerSpec::maxpool(2, 2),
              LayerSpec::flatten(),        LayerSpec::dense(64),             LayerSpec::act(Activation::Relu),
              LayerSpec::dense(16),        LayerSpec::act(Activation::Relu), LayerSpec::dense(1),
              LayerSpec::act(tanh_head ? Activation::ScaledTanh : Activation::Sigmoid)};
  return s;
}

ModelSpec ModelSpec::stage2(std::size_t vocab_size, std::size_t classes, bool sigmoid_head) {
  ModelSpec s;
  s.stage = 2;
  s.input_length = 400;
  s.vocab_size = vocab_size;
  s.embedding_dim = 300;
  s.layers = {LayerSpec::conv1d(64, 3),  LayerSpec::act(Activation::Relu), LayerSpec::batchnorm(),
              LayerSpec::maxpool(2, 2),  LayerSpec::conv1d(128, 3),        LayerSpec::act(Activation::Relu),
              LayerSpec::batchnorm(),    LayerSpec::maxpool(2, 2),         LayerSpec::lstm(100, true),
              LayerSpec::lstm(10, false), LayerSpec::dense(100),           LayerSpec::act(Activation::Relu),
              LayerSpec::dense(classes),
              LayerSpec::act(sigmoid_head ? Activation::Sigmoid : Activation::Softmax)};
  return s;
}

ModelSpec ModelSpec::tiny_stage1(std::size_t vocab_size, std::size_t input_length) {
  ModelSpec s = stage1(vocab_size);
  s.input_length = input_length;
  s.embedding_dim = 4;
  s.layers[0] = LayerSpec::conv1d(6, 3);
  s.layers[3] = LayerSpec::conv1d(5, 3);
  s.layers[7] = LayerSpec::dense(8);
  s.layers[9] = LayerSpec::dense(4);
  return s;
}

ModelSpec ModelSpec::tiny_stage2(std::size_t vocab_size, std::size_t classes, std::size_t input_length) {
  ModelSpec s = stage2(vocab_size, classes);
  s.input_length = input_length;
  s.embedding_dim = 5;
  s.layers[0] = LayerSpec::conv1d(4, 3);
  s.layers[4] = LayerSpec::conv1d(6, 3);
  s.layers[8] = LayerSpec::lstm(5, true);
  s.layers[9] = LayerSpec::lstm(3, false);
  s.layers[10] = LayerSpec::dense(6);
  return s;
}

std::size_t validate_spec(const ModelSpec& spec) {
  if (spec.input_length == 0 || spec.vocab_size == 0 || spec.embedding_dim == 0) {
    throw Error(ErrorCode::IncompatibleSpec, "input length, vocabulary size and embedding dim must be positive");
  }
  bool sequence = true;
  std::size_t len = spec.input_length;
  std::size_t width = spec.embedding_dim;
  std::string previous = "embedding";
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::string current = "layer " + std::to_string(i) + " (" + l.to_text() + ")";
    auto fail = [&](const std::string& why) {
      throw Error(ErrorCode::IncompatibleSpec, previous + " -> " + current + ": " + why);
    };
    switch (l.kind) {
      case LayerKind::Conv1D:
        if (!sequence) fail("conv1d needs a sequence input");
        if (l.units == 0 || l.kernel == 0) fail("filters and kernel must be positive");
        if (len < l.kernel) fail("sequence length " + std::to_string(len) + " shorter than kernel");
        len = len - l.kernel + 1;
        width = l.units;
        break;
      case LayerKind::MaxPool1D:
        if (!sequence) fail("maxpool needs a sequence input");
        if (l.window == 0 || l.stride == 0) fail("window and stride must be positive");
        if (len < l.window) fail("sequence length " + std::to_string(len) + " shorter than window");
        len = (len - l.window) / l.stride + 1;
        break;
      case LayerKind::Activation:
      case LayerKind::BatchNorm:
        break;
      case LayerKind::Flatten:
        if (!sequence) fail("flatten needs a sequence input");
        sequence = false;
        width *= len;
        break;
      case LayerKind::Lstm:
        if (!sequence) fail("lstm needs a sequence input");
        if (l.units == 0) fail("cells must be positive");
        width = l.units;
        sequence = l.return_sequences;
        break;
      case LayerKind::Dense:
        if (sequence) fail("dense needs a flat input (add flatten or a last-step LSTM)");
        if (l.units == 0) fail("units must be positive");
        width = l.units;
        break;
    }
    previous = current;
  }
  if (sequence) throw Error(ErrorCode::IncompatibleSpec, previous + ": model output must be flat");
  return width;
}

std::size_t ModelSpec::output_width() const { return validate_spec(*this); }

Activation ModelSpec::output_activation() const {
  if (layers.empty() || layers.back().kind != LayerKind::Activation) {
    throw Error(ErrorCode::IncompatibleSpec, "model must end in an activation layer");
  }
  return layers.back().activation;
}

bool ModelSpec::uses_bce() const {
  const auto a = output_activation();
  return a == Activation::Sigmoid || a == Activation::ScaledTanh;
}

// -------------------------------------------------------------------- Model

Model Model::build(const ModelSpec& spec, std::uint64_t seed) {
  validate_spec(spec);
  if (spec.layers.empty() || spec.layers.back().kind != LayerKind::Activation) {
    throw Error(ErrorCode::IncompatibleSpec, "model must end in an activation layer");
  }
  std::mt19937_64 rng(seed);
  Model model;
  model.spec_ = spec;

  Tensor table({spec.vocab_size, spec.embedding_dim});
  fill_uniform(table, 0.05, rng);
  model.layers_.emplace_back(EmbeddingLayer{std::move(table)});

  std::size_t width = spec.embedding_dim;
  std::size_t len = spec.input_length;
  for (const LayerSpec& l : spec.layers) {
    switch (l.kind) {
      case LayerKind::Conv1D: {
        Conv1DParams p{Tensor({l.units, width, l.kernel}), Tensor({l.units})};
        fill_uniform(p.weights, glorot_limit(width * l.kernel, l.units * l.kernel), rng);
        model.layers_.emplace_back(Conv1DLayer{std::move(p)});
        len = len - l.kernel + 1;
        width = l.units;
        break;
      }
      case LayerKind::MaxPool1D:
        model.layers_.emplace_back(MaxPoolLayer{l.window, l.stride});
        len = (len - l.window) / l.stride + 1;
        break;
      case LayerKind::Activation:
        model.layers_.emplace_back(ActivationLayer{l.activation});
        break;
      case LayerKind::BatchNorm:
        model.layers_.emplace_back(BatchNormLayer{BatchNormParams{
            Tensor({width}, 1.0), Tensor({width}), Tensor({width}), Tensor({width}, 1.0)}});
        break;
      case LayerKind::Flatten:
        model.layers_.emplace_back(FlattenLayer{});
        width *= len;
        break;
      case LayerKind::Lstm: {
        const std::size_t h = l.units;
        LstmParams p{Tensor({4 * h, width}), Tensor({4 * h, h}), Tensor({4 * h})};
        fill_uniform(p.input_weights, glorot_limit(width, 4 * h), rng);
        fill_uniform(p.recurrent_weights, glorot_limit(h, 4 * h), rng);
        model.layers_.emplace_back(LstmLayer{std::move(p), l.return_sequences});
        width = h;
        break;
      }
      case LayerKind::Dense: {
        DenseParams p{Tensor({l.units, width}), Tensor({l.units})};
        fill_uniform(p.weights, glorot_limit(width, l.units), rng);
        model.layers_.emplace_back(DenseLayer{std::move(p)});
        width = l.units;
        break;
      }
    }
  }
  return model;
}

namespace {

void check_ids(const Tensor& ids, const ModelSpec& spec) {
  if (ids.rank() != 2 || ids.dim(1) != spec.input_length) {
    throw Error(ErrorCode::LengthMismatch, "model expects B x " + std::to_string(spec.input_length) +
                                               " ids, got " + shape_string(ids.shape()));
  }
}

}  // namespace

Tensor Model::forward(const Tensor& ids) const {
  check_ids(ids, spec_);
  Tensor x = ids;
  for (const Layer& layer : layers_) {
    x = std::visit(
        overloaded{
            [&](const EmbeddingLayer& l) { return embedding_forward(x, l.table); },
            [&](const Conv1DLayer& l) { return conv1d_forward(x, l.params); },
            [&](const MaxPoolLayer& l) { return maxpool1d_forward(x, l.window, l.stride).output; },
            [&](const ActivationLayer& l) { return activate(x, l.kind); },
            [&](const BatchNormLayer& l) { return batchnorm_eval(x, l.params); },
            [&](const FlattenLayer&) { return x.reshaped({x.dim(0), x.size() / x.dim(0)}); },
            [&](const LstmLayer& l) { return lstm_forward(x, l.params, l.return_sequences).output; },
            [&](const DenseLayer& l) { return dense_forward(x, l.params); },
        },
        layer);
  }
  return x;
}

Tensor Model::forward_train(const Tensor& ids, Trace& trace) {
  check_ids(ids, spec_);
  trace.layers.assign(layers_.size(), LayerCache{});
  Tensor x = ids;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    LayerCache& cache = trace.layers[i];
    x = std::visit(
        overloaded{
            [&](EmbeddingLayer& l) {
              cache.input = x;
              return embedding_forward(x, l.table);
            },
            [&](Conv1DLayer& l) {
              cache.input = x;
              return conv1d_forward(x, l.params);
            },
            [&](MaxPoolLayer& l) {
              auto r = maxpool1d_forward(x, l.window, l.stride);
              cache.pool = std::move(r.cache);
              return std::move(r.output);
            },
            [&](ActivationLayer& l) {
              cache.output = activate(x, l.kind);
              return cache.output;
            },
            [&](BatchNormLayer& l) {
              auto r = batchnorm_train(x, l.params);
              cache.batchnorm = std::move(r.cache);
              return std::move(r.output);
            },
            [&](FlattenLayer&) {
              cache.input = Tensor();
              cache.pool.input_shape = x.shape();
              return x.reshaped({x.dim(0), x.size() / x.dim(0)});
            },
            [&](LstmLayer& l) {
              auto r = lstm_forward(x, l.params, l.return_sequences);
              cache.lstm = std::move(r.cache);
              return std::move(r.output);
            },
            [&](DenseLayer& l) {
              cache.input = x;
              return dense_forward(x, l.params);
            },
        },
        layers_[i]);
  }
  return x;
}

GradientSet Model::backward(const Tensor& output_grad, const Trace& trace) const {
  if (trace.layers.size() != layers_.size()) {
    throw Error(ErrorCode::ShapeMismatch, "trace does not belong to this model");
  }
  // Gradient slots follow parameters(): collect per-layer lists, then flatten.
  std::vector<std::vector<Tensor>> per_layer(layers_.size());
  Tensor g = output_grad;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const LayerCache& cache = trace.layers[i];
    auto& slot = per_layer[i];
    std::visit(overloaded{
                   [&](const EmbeddingLayer& l) {
                     slot.push_back(embedding_backward(g, cache.input, l.table.shape()));
                   },
                   [&](const Conv1DLayer& l) {
                     auto r = conv1d_backward(g, cache.input, l.params);
                     slot.push_back(std::move(r.weights));
                     slot.push_back(std::move(r.bias));
                     g = std::move(r.input);
                   },
                   [&](const MaxPoolLayer&) { g = maxpool1d_backward(g, cache.pool); },
                   [&](const ActivationLayer& l) { g = activation_backward(g, cache.output, l.kind); },
                   [&](const BatchNormLayer& l) {
                     auto r = batchnorm_backward(g, cache.batchnorm, l.params);
                     slot.push_back(std::move(r.gamma));
                     slot.push_back(std::move(r.beta));
                     g = std::move(r.input);
                   },
                   [&](const FlattenLayer&) { g = g.reshaped(cache.pool.input_shape); },
                   [&](const LstmLayer& l) {
                     auto r = lstm_backward(g, cache.lstm, l.params);
                     slot.push_back(std::move(r.input_weights));
                     slot.push_back(std::move(r.recurrent_weights));
                     slot.push_back(std::move(r.bias));
                     g = std::move(r.input);
                   },
                   [&](const DenseLayer& l) {
                     auto r = dense_backward(g, cache.input, l.params);
                     slot.push_back(std::move(r.weights));
                     slot.push_back(std::move(r.bias));
                     g = std::move(r.input);
                   },
               },
               layers_[i]);
  }
  GradientSet grads;
  for (auto& slot : per_layer) {
    for (auto& t : slot) grads.push_back(std::move(t));
  }
  return grads;
}

namespace {

template <typename ModelLayers, typename Out>
void collect(ModelLayers& layers, bool with_buffers, std::vector<Out>& out) {
  for (auto& layer : layers) {
    std::visit(overloaded{
                   [&](auto& l) {
                     using L = std::decay_t<decltype(l)>;
                     if constexpr (std::is_same_v<L, EmbeddingLayer>) {
                       out.push_back(&l.table);
                     } else if constexpr (std::is_same_v<L, Conv1DLayer> || std::is_same_v<L, DenseLayer>) {
                       out.push_back(&l.params.weights);
                       out.push_back(&l.params.bias);
                     } else if constexpr (std::is_same_v<L, BatchNormLayer>) {
                       out.push_back(&l.params.gamma);
                       out.push_back(&l.params.beta);
                       if (with_buffers) {
                         out.push_back(&l.params.running_mean);
                         out.push_back(&l.params.running_var);
                       }
                     } else if constexpr (std::is_same_v<L, LstmLayer>) {
                       out.push_back(&l.params.input_weights);
                       out.push_back(&l.params.recurrent_weights);
                       out.push_back(&l.params.bias);
                     }
                   },
               },
               layer);
  }
}

}  // namespace

std::vector<Tensor*> Model::parameters() {
  std::vector<Tensor*> out;
  collect(layers_, false, out);
  return out;
}

std::vector<const Tensor*> Model::parameters() const {
  std::vector<const Tensor*> out;
  collect(layers_, false, out);
  return out;
}

std::vector<Tensor*> Model::state_tensors() {
  std::vector<Tensor*> out;
  collect(layers_, true, out);
  return out;
}

std::vector<const Tensor*> Model::state_tensors() const {
  std::vector<const Tensor*> out;
  collect(layers_, true, out);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto* t : parameters()) n += t->size();
  return n;
}

// --------------------------------------------------------------- batch/loss

Tensor make_id_batch(std::span<const IdVector> rows, std::size_t length) {
  if (rows.empty()) throw Error(ErrorCode::InvalidArgument, "empty batch");
  Tensor ids({rows.size(), length});
  for (std::size_t b = 0; b < rows.size(); ++b) {
    const std::size_t n = std::min(length, rows[b].size());
    for (std::size_t t = 0; t < n; ++t) ids.at(b, t) = static_cast<double>(rows[b][t]);
  }
  return ids;
}

std::vector<std::size_t> predict_labels(const Tensor& output, double threshold) {
  const std::size_t rows = output.dim(0), cols = output.dim(1);
  std::vector<std::size_t> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (cols == 1) {
      out[r] = output.at(r, 0) >= threshold ? 1 : 0;
    } else {
      const double* row = output.data() + r * cols;
      out[r] = static_cast<std::size_t>(std::max_element(row, row + cols) - row);
    }
  }
  return out;
}

BatchLoss evaluate_loss(const ModelSpec& spec, const Tensor& output, std::span<const std::size_t> labels) {
  const std::size_t rows = output.dim(0), cols = output.dim(1);
  if (labels.size() != rows) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(labels.size()) + " labels for " +
                                               std::to_string(rows) + " outputs");
  }
  Tensor targets(output.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    if (cols == 1) {
      if (labels[r] > 1) throw Error(ErrorCode::InvalidArgument, "binary label must be 0 or 1");
      targets.at(r, 0) = static_cast<double>(labels[r]);
    } else {
      if (labels[r] >= cols) {
        throw Error(ErrorCode::IndexOutOfRange, "class label " + std::to_string(labels[r]) +
                                                    " >= head width " + std::to_string(cols));
      }
      targets.at(r, labels[r]) = 1.0;
    }
  }
  LossResult lr = spec.uses_bce() ? bce_loss(targets, output) : cce_loss(targets, output);
  BatchLoss result{lr.value, std::move(lr.gradient), 0};
  const auto predicted = predict_labels(output);
  for (std::size_t r = 0; r < rows; ++r) result.correct += predicted[r] == labels[r] ? 1 : 0;
  return result;
}

// ----------------------------------------------------------------- training

TrainConfig stage1_defaults() {
  TrainConfig c;
  c.optimizer.kind = OptimizerKind::Adam;
  c.optimizer.learning_rate = 0.005;
  c.batch_size = 64;
  c.epochs = 10;
  return c;
}

TrainConfig stage2_defaults() {
  TrainConfig c;
  c.optimizer.kind = OptimizerKind::Adam;
  c.optimizer.learning_rate = 0.001;
  c.batch_size = 32;
  c.epochs = 50;
  c.smote = true;
  return c;
}

std::string TrainLog::to_json() const {
  nlohmann::json j;
  j["steps"] = steps;
  j["samples_after_smote"] = samples_after_smote;
  j["warnings"] = warnings;
  auto& e = j["epochs"] = nlohmann::json::array();
  for (const auto& r : epochs) e.push_back({{"epoch", r.epoch}, {"loss", r.loss}, {"accuracy", r.accuracy}});
  return j.dump(2);
}

TrainLog train(Model& model, const TrainingData& data, const TrainConfig& config, const EpochCallback& on_epoch) {
  if (config.batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch size must be at least 1");
  if (config.epochs < 1) throw Error(ErrorCode::InvalidArgument, "epochs must be at least 1");
  if (data.inputs.empty()) throw Error(ErrorCode::InvalidArgument, "no training data");
  if (data.inputs.size() != data.labels.size()) {
    throw Error(ErrorCode::LengthMismatch, "inputs and labels differ in count");
  }
  const ModelSpec& spec = model.spec();
  const std::size_t width = spec.output_width();
  for (auto label : data.labels) {
    if ((width == 1 && label > 1) || (width > 1 && label >= width)) {
      throw Error(ErrorCode::InvalidArgument, "label " + std::to_string(label) + " does not fit a head of width " +
                                                  std::to_string(width));
    }
  }

  TrainLog log;
  std::vector<IdVector> inputs = data.inputs;
  std::vector<std::size_t> labels = data.labels;
  if (config.smote) {
    const std::size_t label_count = width == 1 ? 2 : width;
    std::vector<std::vector<IdVector>> classes(label_count);
    for (std::size_t i = 0; i < inputs.size(); ++i) classes[labels[i]].push_back(inputs[i]);
    // Classes absent from the data stay absent.
    std::vector<std::size_t> present;
    std::vector<std::vector<IdVector>> compact;
    for (std::size_t c = 0; c < label_count; ++c) {
      if (!classes[c].empty()) {
        present.push_back(c);
        compact.push_back(std::move(classes[c]));
      }
    }
    SmoteConfig sc;
    sc.k = config.smote_k;
    sc.seed = config.seed;
    SmoteResult balanced = oversample(compact, spec.vocab_size, sc);
    inputs.clear();
    labels.clear();
    for (std::size_t i = 0; i < present.size(); ++i) {
      for (auto& row : balanced.classes[i]) {
        inputs.push_back(std::move(row));
        labels.push_back(present[i]);
      }
    }
    log.warnings = std::move(balanced.warnings);
  }
  log.samples_after_smote = inputs.size();

  Optimizer optimizer(config.optimizer);
  std::mt19937_64 rng(config.seed ^ 0x5DEECE66DULL);
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<IdVector> batch_rows;
  std::vector<std::size_t> batch_labels;
  Trace trace;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch_rows.clear();
      batch_labels.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch_rows.push_back(inputs[order[i]]);
        batch_labels.push_back(labels[order[i]]);
      }
      const Tensor ids = make_id_batch(batch_rows, spec.input_length);
      const Tensor output = model.forward_train(ids, trace);
      BatchLoss bl = evaluate_loss(spec, output, batch_labels);
      ++log.steps;
      if (!std::isfinite(bl.loss) || !output.all_finite()) throw TrainingDiverged(log.steps, log);
      loss_sum += bl.loss * static_cast<double>(end - start);
      correct += bl.correct;
      GradientSet grads = model.backward(bl.output_grad, trace);
      auto params = model.parameters();
      optimizer.step(params, grads);
    }
    EpochRecord record{epoch, loss_sum / static_cast<double>(order.size()),
                       static_cast<double>(correct) / static_cast<double>(order.size())};
    log.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
    if (config.stop_at_accuracy && record.accuracy >= *config.stop_at_accuracy) break;
  }
  return log;
}

}  // namespace vulndet
