#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "vulndet/dataset.hpp"
#include "vulndet/error.hpp"
#include "vulndet/layers.hpp"
#include "vulndet/optim.hpp"
#include "vulndet/smote.hpp"
#include "vulndet/tensor.hpp"

namespace vulndet {

// ---------------------------------------------------------------- ModelSpec

enum class LayerKind { Conv1D, MaxPool1D, Activation, BatchNorm, Flatten, Lstm, Dense };

/// One layer after the embedding. Only the fields relevant to `kind` are used.
struct LayerSpec {
  LayerKind kind = LayerKind::Flatten;
  std::size_t units = 0;   // conv filters, LSTM cells, dense outputs
  std::size_t kernel = 0;  // conv kernel width
  std::size_t window = 0;  // pool window
  std::size_t stride = 0;  // pool stride
  Activation activation = Activation::Relu;
  bool return_sequences = false;

  static LayerSpec conv1d(std::size_t filters, std::size_t kernel);
  static LayerSpec maxpool(std::size_t window, std::size_t stride);
  static LayerSpec act(Activation kind);
  static LayerSpec batchnorm();
  static LayerSpec flatten();
  static LayerSpec lstm(std::size_t cells, bool return_sequences);
  static LayerSpec dense(std::size_t outputs);

  /// "conv1d filters=256 kernel=7", "activation kind=relu", ...
  std::string to_text() const;
  static LayerSpec parse(std::string_view text);

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ModelSpec {
  int stage = 1;
  std::size_t input_length = 0;
  std::size_t vocab_size = 0;
  std::size_t embedding_dim = 0;
  std::vector<LayerSpec> layers;

  /// Embedding 13 x 500, conv 256/k7 + ReLU, pool 2/2, conv 128/k7 + ReLU,
  /// pool 2/2, flatten, dense 64 + ReLU, dense 16 + ReLU, dense 1 + sigmoid.
  /// `tanh_head` swaps the sigmoid for (tanh + 1) / 2.
  static ModelSpec stage1(std::size_t vocab_size, bool tanh_head = false);
  /// Embedding 300 x 400, conv 64/k3 + ReLU + BN, pool 2/2, conv 128/k3 +
  /// ReLU + BN, pool 2/2, LSTM 100 (sequence), LSTM 10 (last step),
  /// dense 100 + ReLU, dense C + softmax (or per-class sigmoid).
  static ModelSpec stage2(std::size_t vocab_size, std::size_t classes, bool sigmoid_head = false);

  /// Same layer kinds and ordering with small widths, for fast checks.
  static ModelSpec tiny_stage1(std::size_t vocab_size, std::size_t input_length = 24);
  static ModelSpec tiny_stage2(std::size_t vocab_size, std::size_t classes, std::size_t input_length = 20);

  /// Output width of the final layer (validates the spec).
  std::size_t output_width() const;
  Activation output_activation() const;
  /// Binary cross-entropy for sigmoid-style heads, categorical otherwise.
  bool uses_bce() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Walks the layer list tracking shapes; throws IncompatibleSpec naming the
/// first offending layer pair. Returns the output width.
std::size_t validate_spec(const ModelSpec& spec);

// -------------------------------------------------------------------- Model

struct EmbeddingLayer {
  Tensor table;
};
struct Conv1DLayer {
  Conv1DParams params;
};
struct MaxPoolLayer {
  std::size_t window;
  std::size_t stride;
};
struct ActivationLayer {
  Activation kind;
};
struct BatchNormLayer {
  BatchNormParams params;
};
struct FlattenLayer {};
struct LstmLayer {
  LstmParams params;
  bool return_sequences;
};
struct DenseLayer {
  DenseParams params;
};

using Layer = std::variant<EmbeddingLayer, Conv1DLayer, MaxPoolLayer, ActivationLayer, BatchNormLayer,
                           FlattenLayer, LstmLayer, DenseLayer>;

/// Per-layer values recorded by a training forward pass.
struct LayerCache {
  Tensor input;
  Tensor output;
  MaxPoolCache pool;
  LstmCache lstm;
  BatchNormCache batchnorm;
};

struct Trace {
  std::vector<LayerCache> layers;
};

/// Gradients in the order of Model::parameters().
using GradientSet = std::vector<Tensor>;

class Model {
 public:
  /// Allocates and initializes every parameter from a seeded generator:
  /// Glorot-uniform weights, zero biases, embeddings uniform in +-0.05.
  static Model build(const ModelSpec& spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  /// Inference (eval mode). ids: B x inputLength. Throws LengthMismatch.
  Tensor forward(const Tensor& ids) const;

  /// Train-mode forward pass; batch norm uses and updates batch statistics.
  Tensor forward_train(const Tensor& ids, Trace& trace);
  /// Backpropagates d loss / d output through a recorded trace.
  GradientSet backward(const Tensor& output_grad, const Trace& trace) const;

  /// Trainable tensors in layer order.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  /// Trainable tensors plus batch-norm running statistics, in layer order.
  std::vector<Tensor*> state_tensors();
  std::vector<const Tensor*> state_tensors() const;
  std::size_t parameter_count() const;

  /// Metadata carried in the model file.
  std::string vocab_hash = "00000000";
  LabelMap labels;

 private:
  ModelSpec spec_;
  std::vector<Layer> layers_;
};

/// B x L id tensor from encoded rows, each truncated (or PAD-extended) to `length`.
Tensor make_id_batch(std::span<const IdVector> rows, std::size_t length);

struct BatchLoss {
  double loss = 0.0;
  Tensor output_grad;
  std::size_t correct = 0;
};

/// Loss, its gradient with respect to the model output, and the number of
/// correctly classified rows. Labels are 0/1 for BCE heads with one output,
/// class indices otherwise.
BatchLoss evaluate_loss(const ModelSpec& spec, const Tensor& output, std::span<const std::size_t> labels);

/// Predicted label per row: p >= threshold for a single-output head, argmax otherwise.
std::vector<std::size_t> predict_labels(const Tensor& output, double threshold = 0.5);

// ----------------------------------------------------------------- training

struct TrainingData {
  std::vector<IdVector> inputs;
  std::vector<std::size_t> labels;
};

struct TrainConfig {
  OptimizerConfig optimizer;
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  std::uint64_t seed = 42;
  bool smote = false;  // oversample every label to the largest label count before training
  std::size_t smote_k = 5;
  // Stop once an epoch's training accuracy reaches this value.
  std::optional<double> stop_at_accuracy;
};

/// Stage 1 defaults: Adam, batch 64, 10 epochs, lr 0.005.
TrainConfig stage1_defaults();
/// Stage 2 defaults: Adam, batch 32, 50 epochs, lr 0.001, SMOTE on.
TrainConfig stage2_defaults();

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean per-sample loss over the epoch
  double accuracy = 0.0;  // fraction of samples classified correctly in their batch

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t steps = 0;
  std::size_t samples_after_smote = 0;
  std::vector<std::string> warnings;

  std::string to_json() const;
  friend bool operator==(const TrainLog&, const TrainLog&) = default;
};

/// Raised when the loss turns non-finite; carries the log up to that point.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(std::size_t step, TrainLog log)
      : Error(ErrorCode::DivergenceDetected, "loss became non-finite at step " + std::to_string(step)),
        step_(step),
        log_(std::move(log)) {}

  std::size_t step() const { return step_; }
  const TrainLog& log() const { return log_; }

 private:
  std::size_t step_;
  TrainLog log_;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch training with a seeded shuffle per epoch.
TrainLog train(Model& model, const TrainingData& data, const TrainConfig& config,
               const EpochCallback& on_epoch = {});

// ------------------------------------------------------------ serialization

inline constexpr int kModelFormatVersion = 1;

/// Text header (version, stage, vocab hash, spec, labels), binary payload of
/// every state tensor (u32 rank, u64 extents, f64 little-endian values) and a
/// trailing CRC-32 line over the payload.
std::string serialize_model(const Model& model);
/// Throws VersionMismatch, ChecksumMismatch or SpecCorrupt.
Model deserialize_model(std::string_view bytes);

void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace vulndet
