#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace vulndet {

/// C x C counts; rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes = 0)
      : classes_(classes), counts_(classes * classes, 0) {}

  std::size_t classes() const { return classes_; }
  std::size_t& at(std::size_t truth, std::size_t predicted) { return counts_[truth * classes_ + predicted]; }
  std::size_t at(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * classes_ + predicted];
  }
  std::size_t total() const;
  std::size_t trace() const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t classes_;
  std::vector<std::size_t> counts_;
};

/// Throws LengthMismatch or IndexOutOfRange.
ConfusionMatrix confusion(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                          std::size_t classes);

struct ClassScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;    // true count
  std::size_t predicted = 0;  // predicted count
  // Zero denominators are reported as 0 and flagged.
  bool precision_undefined = false;
  bool recall_undefined = false;
};

struct Scores {
  double accuracy = 0.0;
  std::vector<ClassScore> per_class;
  double macro_f1 = 0.0;  // over classes that occur as truth or prediction
  double micro_f1 = 0.0;
  double positive_f1 = 0.0;  // class 1 of a binary matrix, otherwise 0
};

/// F1 is computed as 2TP / (2TP + FP + FN), which equals 2PR / (P + R).
/// Throws EmptyMatrix when the matrix holds no samples.
Scores scores(const ConfusionMatrix& matrix);

std::string format_scores_table(const Scores& s, std::span<const std::string> class_names = {});
std::string scores_to_json(const Scores& s, std::span<const std::string> class_names = {});

}  // namespace vulndet
