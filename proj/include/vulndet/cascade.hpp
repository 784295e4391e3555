#pragma once

#include <atomic>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vulndet/dataset.hpp"
#include "vulndet/model.hpp"
#include "vulndet/normalizer.hpp"
#include "vulndet/vocab.hpp"

namespace vulndet {

enum class Verdict { NonVulnerable, Vulnerable };

std::string_view to_string(Verdict v);

struct Prediction {
  double stage1_probability = 0.0;
  Verdict verdict = Verdict::NonVulnerable;
  std::optional<std::vector<double>> class_distribution;  // only for Vulnerable
  std::optional<std::string> predicted_cwe;
  bool flagged = false;  // the lexer reported a problem with the source
};

/// Binary detector gating the CWE classifier: Stage 2 runs only when the
/// Stage-1 probability is at or above the threshold.
class Cascade {
 public:
  /// The label map defaults to the one stored in the Stage-2 model. Throws
  /// VocabHashMismatch when a model was trained against another vocabulary.
  Cascade(const Model& stage1, const Model& stage2, const Vocabulary& vocab, double threshold = 0.5,
          NormalizerOptions options = {});

  Prediction predict(std::string_view source) const;
  /// Encoded entry point; rows are truncated or PAD-extended to each model's input length.
  Prediction predict_encoded(const IdVector& ids) const;
  std::vector<Prediction> predict_batch(std::span<const IdVector> rows) const;

  const LabelMap& labels() const { return labels_; }
  double threshold() const { return threshold_; }

  std::size_t stage1_evaluations() const { return stage1_count_.load(); }
  std::size_t stage2_evaluations() const { return stage2_count_.load(); }

 private:
  const Model& stage1_;
  const Model& stage2_;
  const Vocabulary& vocab_;
  LabelMap labels_;
  double threshold_;
  NormalizerOptions options_;
  mutable std::atomic<std::size_t> stage1_count_{0};
  mutable std::atomic<std::size_t> stage2_count_{0};
};

/// Normalizes a class-score row so it sums to one (softmax rows pass unchanged).
std::vector<double> to_distribution(std::span<const double> row);

}  // namespace vulndet
