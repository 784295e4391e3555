#include <gtest/gtest.h>

#include <cmath>

#include <filesystem>

#include <json.hpp>

#include "support/oracles.hpp"
#include "support/toy_data.hpp"
#include "vulndet/error.hpp"
#include "vulndet/model.hpp"

using namespace vulndet;
using namespace vulndet::testkit;

namespace {

template <typename F>
Error error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e;
  }
  return Error(ErrorCode::Io, "no error raised");
}

Tensor random_ids(std::mt19937_64& rng, std::size_t batch, const ModelSpec& spec) {
  return make_id_batch(random_rows(rng, batch, spec.input_length, spec.vocab_size), spec.input_length);
}

// Checks d(training loss)/d(parameters) for a whole model against central differences.
ModelCheckResult check_model(Model& model, const Tensor& ids, const std::vector<std::size_t>& labels,
                                std::size_t max_coords) {
  Trace trace;
  const Tensor out = model.forward_train(ids, trace);
  const BatchLoss bl = evaluate_loss(model.spec(), out, labels);
  const GradientSet grads = model.backward(bl.output_grad, trace);
  auto loss = [&] {
    Trace t;
    return evaluate_loss(model.spec(), model.forward_train(ids, t), labels).loss;
  };
  return check_piecewise(loss, model.parameters(), grads, max_coords);
}

}  // namespace

// ------------------------------------------------------------------ specs

TEST(ModelSpec, Stage1Architecture) {
  const auto spec = ModelSpec::stage1(1000);
  EXPECT_EQ(spec.input_length, 500u);
  EXPECT_EQ(spec.embedding_dim, 13u);
  EXPECT_EQ(spec.output_width(), 1u);
  EXPECT_EQ(spec.output_activation(), Activation::Sigmoid);
  EXPECT_TRUE(spec.uses_bce());
  const auto model = Model::build(spec, 1);
  const auto& table = std::get<EmbeddingLayer>(model.layers()[0]).table;
  EXPECT_EQ(table.shape(), (Shape{1000, 13}));
  // 500 -> conv7 494 -> pool 247 -> conv7 241 -> pool 120; flatten 120 * 128
  const std::size_t expected = 1000 * 13 + (256 * 13 * 7 + 256) + (128 * 256 * 7 + 128) + (64 * 120 * 128 + 64) +
                               (16 * 64 + 16) + (16 + 1);
  EXPECT_EQ(model.parameter_count(), expected);
}

TEST(ModelSpec, Stage2Architecture) {
  const auto spec = ModelSpec::stage2(800, 50);
  EXPECT_EQ(spec.input_length, 400u);
  EXPECT_EQ(spec.embedding_dim, 300u);
  EXPECT_EQ(spec.output_width(), 50u);
  EXPECT_EQ(spec.output_activation(), Activation::Softmax);
  EXPECT_FALSE(spec.uses_bce());
  const auto model = Model::build(spec, 1);
  const auto& last = std::get<DenseLayer>(model.layers()[model.layers().size() - 2]);
  EXPECT_EQ(last.params.weights.shape(), (Shape{50, 100}));
  EXPECT_EQ(ModelSpec::stage2(800, 50, true).output_activation(), Activation::Sigmoid);
  EXPECT_TRUE(ModelSpec::stage2(800, 50, true).uses_bce());
  EXPECT_EQ(ModelSpec::stage1(10, true).output_activation(), Activation::ScaledTanh);
}

TEST(ModelSpec, LayerTextRoundTrip) {
  for (const auto& spec : {ModelSpec::stage1(10), ModelSpec::stage2(10, 3, true)}) {
    for (const auto& l : spec.layers) EXPECT_EQ(LayerSpec::parse(l.to_text()), l) << l.to_text();
  }
  EXPECT_EQ(LayerSpec::conv1d(256, 7).to_text(), "conv1d filters=256 kernel=7");
  EXPECT_THROW(LayerSpec::parse("conv1d filters=x"), Error);
}

TEST(ModelSpec, IncompatibleSpecNamesLayerPair) {
  auto spec = ModelSpec::tiny_stage1(10, 24);
  spec.input_length = 4;  // too short for the second convolution
  const auto e = error_of([&] { validate_spec(spec); });
  EXPECT_EQ(e.code(), ErrorCode::IncompatibleSpec);
  EXPECT_NE(std::string(e.what()).find("->"), std::string::npos) << e.what();

  auto lstm_after_flatten = ModelSpec::tiny_stage1(10);
  lstm_after_flatten.layers.insert(lstm_after_flatten.layers.begin() + 7, LayerSpec::lstm(3, false));
  const auto e2 = error_of([&] { Model::build(lstm_after_flatten, 1); });
  EXPECT_EQ(e2.code(), ErrorCode::IncompatibleSpec);
  EXPECT_NE(std::string(e2.what()).find("flatten"), std::string::npos) << e2.what();

  auto unflattened = ModelSpec::tiny_stage1(10);
  unflattened.layers.erase(unflattened.layers.begin() + 6);
  EXPECT_EQ(error_of([&] { validate_spec(unflattened); }).code(), ErrorCode::IncompatibleSpec);
}

// ------------------------------------------------------------------ build

TEST(Model, SeededBuildIsBitwiseDeterministic) {
  const auto spec = ModelSpec::tiny_stage2(30, 4);
  auto a = Model::build(spec, 9), b = Model::build(spec, 9), c = Model::build(spec, 10);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(*pa[i], *pb[i]);
    differs = differs || !(*pa[i] == *pc[i]);
  }
  EXPECT_TRUE(differs);
}

TEST(Model, InitializationScheme) {
  const auto model = Model::build(ModelSpec::stage1(50), 3);
  const auto& table = std::get<EmbeddingLayer>(model.layers()[0]).table;
  for (double v : table.values()) EXPECT_LE(std::abs(v), 0.05);
  const auto& conv = std::get<Conv1DLayer>(model.layers()[1]).params;
  const double limit = std::sqrt(6.0 / (13 * 7 + 256 * 7));
  for (double v : conv.weights.values()) EXPECT_LE(std::abs(v), limit);
  for (double v : conv.bias.values()) EXPECT_EQ(v, 0.0);
}

// ---------------------------------------------------------------- forward

TEST(Model, Stage1OutputsInOpenUnitInterval) {
  std::mt19937_64 rng(1);
  const auto model = Model::build(ModelSpec::stage1(60), 1);
  const auto out = model.forward(random_ids(rng, 3, model.spec()));
  ASSERT_EQ(out.shape(), (Shape{3, 1}));
  for (double p : out.values()) {
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
}

TEST(Model, Stage2RowsOnSimplex) {
  std::mt19937_64 rng(2);
  const auto model = Model::build(ModelSpec::stage2(60, 50), 2);
  const auto out = model.forward(random_ids(rng, 2, model.spec()));
  ASSERT_EQ(out.shape(), (Shape{2, 50}));
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 50; ++c) {
      EXPECT_GT(out.at(r, c), 0.0);
      s += out.at(r, c);
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Model, NearZeroHeadGivesNearUniformDistribution) {
  std::mt19937_64 rng(3);
  auto model = Model::build(ModelSpec::stage2(40, 50), 3);
  auto& head = std::get<DenseLayer>(model.layers()[model.layers().size() - 2]).params;
  head.weights *= 1e-6;
  const auto out = model.forward(random_ids(rng, 2, model.spec()));
  for (double p : out.values()) EXPECT_NEAR(p * 50.0, 1.0, 1e-4);
}

TEST(Model, LengthMismatch) {
  const auto model = Model::build(ModelSpec::tiny_stage1(10), 1);
  EXPECT_EQ(error_of([&] { model.forward(Tensor({1, 23})); }).code(), ErrorCode::LengthMismatch);
}

TEST(Model, IdBatchPadsAndTruncates) {
  const std::vector<IdVector> rows{{5, 6, 7}, {1}};
  const auto t = make_id_batch(rows, 2);
  EXPECT_EQ(t, Tensor({2, 2}, std::vector<double>{5, 6, 1, 0}));
}

TEST(Model, EvalForwardMatchesTrainForwardWithoutBatchNorm) {
  std::mt19937_64 rng(4);
  auto model = Model::build(ModelSpec::tiny_stage1(20), 4);
  const auto ids = random_ids(rng, 3, model.spec());
  Trace trace;
  EXPECT_EQ(model.forward(ids), model.forward_train(ids, trace));
}

// ------------------------------------------------------------- gradients

TEST(ModelGradients, TinyStage1) {
  std::mt19937_64 rng(5);
  for (bool tanh_head : {false, true}) {
    auto spec = ModelSpec::tiny_stage1(12);
    if (tanh_head) spec.layers.back() = LayerSpec::act(Activation::ScaledTanh);
    auto model = Model::build(spec, 5);
    const auto r = check_model(model, random_ids(rng, 3, spec), {1, 0, 1}, 0);
    EXPECT_LT(r.max_error, 1e-4);
    EXPECT_EQ(r.unresolved, 0u);
  }
}

TEST(ModelGradients, TinyStage2Softmax) {
  std::mt19937_64 rng(6);
  auto spec = ModelSpec::tiny_stage2(12, 4);
  auto model = Model::build(spec, 6);
  const auto r = check_model(model, random_ids(rng, 3, spec), {0, 3, 1}, 0);
  EXPECT_LT(r.max_error, 1e-4);
  EXPECT_EQ(r.unresolved, 0u);
}

TEST(ModelGradients, TinyStage2Sigmoid) {
  std::mt19937_64 rng(7);
  auto spec = ModelSpec::tiny_stage2(12, 4);
  spec.layers.back() = LayerSpec::act(Activation::Sigmoid);
  auto model = Model::build(spec, 7);
  const auto r = check_model(model, random_ids(rng, 2, spec), {2, 1}, 0);
  EXPECT_LT(r.max_error, 1e-4);
  EXPECT_EQ(r.unresolved, 0u);
}

TEST(ModelGradients, FullStage1TwoSampleBatch) {
  std::mt19937_64 rng(8);
  auto spec = ModelSpec::stage1(40);
  auto model = Model::build(spec, 8);
  const auto r = check_model(model, random_ids(rng, 2, spec), {1, 0}, 50);
  std::size_t expected = 0;
  for (const Tensor* p : model.parameters()) expected += std::min<std::size_t>(p->size(), 50);
  EXPECT_EQ(r.checked, expected);
  EXPECT_LT(r.max_error, 1e-4);
  EXPECT_EQ(r.unresolved, 0u);
  RecordProperty("kinked_coordinates", static_cast<int>(r.kinked));
}

// --------------------------------------------------------------- training

TEST(Training, RejectsBadConfig) {
  auto model = Model::build(ModelSpec::tiny_stage1(20), 1);
  const auto data = toy_dataset({.per_class = 2, .length = 24, .true_length = 20, .vocab = 20});
  TrainConfig cfg = stage1_defaults();
  cfg.epochs = 0;
  EXPECT_EQ(error_of([&] { train(model, data, cfg); }).code(), ErrorCode::InvalidArgument);
  cfg.epochs = 1;
  auto bad = data;
  bad.labels[0] = 2;
  EXPECT_EQ(error_of([&] { train(model, bad, cfg); }).code(), ErrorCode::InvalidArgument);
}

TEST(Training, StepCountAndDeterminism) {
  const auto spec = ModelSpec::tiny_stage1(30);
  const auto data = toy_dataset({.per_class = 10, .length = 24, .true_length = 20, .vocab = 30});
  TrainConfig cfg = stage1_defaults();
  cfg.batch_size = 8;
  cfg.epochs = 4;
  auto a = Model::build(spec, 2), b = Model::build(spec, 2);
  const auto la = train(a, data, cfg), lb = train(b, data, cfg);
  EXPECT_EQ(la.steps, 4u * 3u);  // ceil(20 / 8) per epoch
  EXPECT_EQ(la, lb);
  EXPECT_EQ(la.to_json(), lb.to_json());
  EXPECT_EQ(serialize_model(a), serialize_model(b));
  EXPECT_TRUE(nlohmann::json::parse(la.to_json()).contains("epochs"));
}

TEST(Training, TinyStage1LearnsToyTask) {
  const auto spec = ModelSpec::tiny_stage1(30, 40);
  const auto data = toy_dataset({.per_class = 16, .length = 40, .true_length = 30, .vocab = 30});
  TrainConfig cfg = stage1_defaults();
  cfg.epochs = 150;
  cfg.stop_at_accuracy = 1.0;
  auto model = Model::build(spec, 3);
  const auto log = train(model, data, cfg);
  EXPECT_EQ(log.epochs.back().accuracy, 1.0);
  EXPECT_LT(log.epochs.back().loss, log.epochs.front().loss);
  const auto preds = predict_labels(model.forward(make_id_batch(data.inputs, spec.input_length)));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == data.labels[i];
  EXPECT_GE(correct, data.labels.size() - 1);
}

TEST(Training, SmoteBalancesMulticlassData) {
  const auto spec = ModelSpec::tiny_stage2(30, 3);
  auto data = toy_dataset({.classes = 3, .per_class = 6, .length = 20, .true_length = 16, .vocab = 30});
  // Drop samples so the classes hold 6, 4 and 2 rows.
  TrainingData uneven;
  for (std::size_t i = 0; i < data.inputs.size(); ++i) {
    const std::size_t keep = 6 - 2 * data.labels[i];
    if (i % 6 < keep) {
      uneven.inputs.push_back(data.inputs[i]);
      uneven.labels.push_back(data.labels[i]);
    }
  }
  TrainConfig cfg = stage2_defaults();
  cfg.epochs = 1;
  cfg.smote_k = 1;
  auto model = Model::build(spec, 1);
  const auto log = train(model, uneven, cfg);
  EXPECT_EQ(log.samples_after_smote, 18u);
  EXPECT_TRUE(log.warnings.empty());
  cfg.smote_k = 5;
  auto model2 = Model::build(spec, 1);
  EXPECT_FALSE(train(model2, uneven, cfg).warnings.empty());
}

TEST(Training, SmoteBalancesBinaryLabels) {
  const auto spec = ModelSpec::tiny_stage1(30, 24);
  auto data = toy_dataset({.classes = 2, .per_class = 8, .length = 24, .true_length = 20, .vocab = 30});
  TrainingData uneven;
  for (std::size_t i = 0; i < data.inputs.size(); ++i) {
    if (data.labels[i] == 0 || i % 8 < 3) {
      uneven.inputs.push_back(data.inputs[i]);
      uneven.labels.push_back(data.labels[i]);
    }
  }
  TrainConfig cfg = stage1_defaults();
  cfg.epochs = 1;
  cfg.smote = true;
  cfg.smote_k = 2;
  auto model = Model::build(spec, 1);
  const auto log = train(model, uneven, cfg);
  EXPECT_EQ(uneven.inputs.size(), 11u);
  EXPECT_EQ(log.samples_after_smote, 16u);
}

TEST(Training, DivergenceIsReportedWithStep) {
  const auto spec = ModelSpec::tiny_stage2(20, 3);
  const auto data = toy_dataset({.classes = 3, .per_class = 4, .length = 20, .true_length = 16, .vocab = 20});
  TrainConfig cfg;
  cfg.optimizer = {.kind = OptimizerKind::Sgd, .learning_rate = 1e300};
  cfg.batch_size = 4;
  cfg.epochs = 5;
  auto model = Model::build(spec, 1);
  try {
    train(model, data, cfg);
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    EXPECT_EQ(e.code(), ErrorCode::DivergenceDetected);
    EXPECT_GE(e.step(), 2u);
    EXPECT_EQ(e.log().steps, e.step());
  }
}

TEST(Training, Defaults) {
  const auto s1 = stage1_defaults();
  EXPECT_EQ(s1.optimizer.kind, OptimizerKind::Adam);
  EXPECT_EQ(s1.batch_size, 64u);
  EXPECT_EQ(s1.epochs, 10u);
  EXPECT_EQ(s1.optimizer.learning_rate, 0.005);
  const auto s2 = stage2_defaults();
  EXPECT_EQ(s2.batch_size, 32u);
  EXPECT_EQ(s2.epochs, 50u);
  EXPECT_EQ(s2.optimizer.learning_rate, 0.001);
  EXPECT_TRUE(s2.smote);
}

TEST(Loss, EvaluateLossAndPredictions) {
  const auto spec = ModelSpec::tiny_stage1(10);
  const Tensor out({2, 1}, std::vector<double>{0.5, 0.9});
  const std::vector<std::size_t> labels{1, 0};
  const auto bl = evaluate_loss(spec, out, labels);
  EXPECT_NEAR(bl.loss, (std::log(2.0) - std::log(0.1)) / 2.0, 1e-12);
  EXPECT_EQ(bl.correct, 1u);
  EXPECT_EQ(predict_labels(out), (std::vector<std::size_t>{1, 1}));
  EXPECT_EQ(predict_labels(Tensor({1, 3}, std::vector<double>{0.2, 0.5, 0.3})), (std::vector<std::size_t>{1}));
}

// ---------------------------------------------------------- serialization

class Serialization : public ::testing::Test {
 protected:
  void SetUp() override {
    auto spec = ModelSpec::tiny_stage2(25, 3);
    model = Model::build(spec, 4);
    model.vocab_hash = "1234abcd";
    model.labels = LabelMap({"CWE-121", "CWE-79", "CWE-20"});
    const auto data = toy_dataset({.classes = 3, .per_class = 4, .length = 20, .true_length = 16, .vocab = 25});
    TrainConfig cfg = stage2_defaults();
    cfg.epochs = 2;
    cfg.smote = false;
    train(model, data, cfg);  // moves batch-norm running statistics off their defaults
    bytes = serialize_model(model);
  }

  Model model;
  std::string bytes;
};

TEST_F(Serialization, RoundTripPreservesEverything) {
  const Model back = deserialize_model(bytes);
  EXPECT_EQ(back.spec(), model.spec());
  EXPECT_EQ(back.vocab_hash, model.vocab_hash);
  EXPECT_EQ(back.labels, model.labels);
  const auto a = model.state_tensors();
  const auto b = back.state_tensors();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i], *b[i]);
  std::mt19937_64 rng(5);
  const auto ids = random_ids(rng, 4, model.spec());
  const auto ya = model.forward(ids), yb = back.forward(ids);
  for (std::size_t i = 0; i < ya.size(); ++i) EXPECT_NEAR(ya[i], yb[i], 1e-12);
  EXPECT_EQ(serialize_model(back), bytes);
}

TEST_F(Serialization, TruncationIsDetected) {
  for (std::size_t cut : {bytes.size() - 1, bytes.size() - 10, bytes.size() - 200}) {
    EXPECT_EQ(error_of([&] { deserialize_model(bytes.substr(0, cut)); }).code(), ErrorCode::ChecksumMismatch) << cut;
  }
  EXPECT_EQ(error_of([&] { deserialize_model(bytes.substr(0, 40)); }).code(), ErrorCode::SpecCorrupt);
}

TEST_F(Serialization, PayloadCorruptionIsDetected) {
  auto corrupt = bytes;
  corrupt[bytes.find("\nend\n") + 40] ^= 0x10;
  EXPECT_EQ(error_of([&] { deserialize_model(corrupt); }).code(), ErrorCode::ChecksumMismatch);
}

TEST_F(Serialization, VersionBumpNamesBothVersions) {
  auto bumped = bytes;
  const auto pos = bumped.find("format_version 1");
  bumped.replace(pos, 16, "format_version 2");
  const auto e = error_of([&] { deserialize_model(bumped); });
  EXPECT_EQ(e.code(), ErrorCode::VersionMismatch);
  const std::string msg = e.what();
  EXPECT_NE(msg.find("2"), std::string::npos);
  EXPECT_NE(msg.find("1"), std::string::npos);
}

TEST_F(Serialization, HeaderCorruption) {
  auto bad = bytes;
  bad.replace(bad.find("layer conv1d"), 12, "layer convXd");
  EXPECT_EQ(error_of([&] { deserialize_model(bad); }).code(), ErrorCode::SpecCorrupt);
  EXPECT_EQ(error_of([&] { deserialize_model("garbage"); }).code(), ErrorCode::SpecCorrupt);
}

TEST_F(Serialization, FileRoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "vulndet_model_test.bin").string();
  save_model(model, path);
  EXPECT_EQ(serialize_model(load_model(path)), bytes);
  std::filesystem::remove(path);
}
