#include "vulndet/metrics.hpp"

#include <cstdio>
#include <json.hpp>
#include <sstream>

#include "vulndet/error.hpp"

namespace vulndet {

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (auto c : counts_) n += c;
  return n;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < classes_; ++i) n += at(i, i);
  return n;
}

ConfusionMatrix confusion(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                          std::size_t classes) {
  if (predictions.size() != labels.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(predictions.size()) + " predictions vs " +
                                               std::to_string(labels.size()) + " labels");
  }
  ConfusionMatrix m(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes || predictions[i] >= classes) {
      throw Error(ErrorCode::IndexOutOfRange, "pair " + std::to_string(i) + " has an index >= " +
                                                  std::to_string(classes));
    }
    ++m.at(labels[i], predictions[i]);
  }
  return m;
}

Scores scores(const ConfusionMatrix& matrix) {
  const std::size_t total = matrix.total();
  if (total == 0) throw Error(ErrorCode::EmptyMatrix, "confusion matrix holds no samples");
  const std::size_t n = matrix.classes();
  Scores s;
  s.accuracy = static_cast<double>(matrix.trace()) / static_cast<double>(total);
  s.per_class.resize(n);
  double macro_sum = 0.0;
  std::size_t macro_count = 0;
  for (std::size_t c = 0; c < n; ++c) {
    ClassScore& cs = s.per_class[c];
    const std::size_t tp = matrix.at(c, c);
    for (std::size_t k = 0; k < n; ++k) {
      cs.support += matrix.at(c, k);
      cs.predicted += matrix.at(k, c);
    }
    const std::size_t fp = cs.predicted - tp;
    const std::size_t fn = cs.support - tp;
    cs.precision_undefined = cs.predicted == 0;
    cs.recall_undefined = cs.support == 0;
    cs.precision = cs.precision_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(cs.predicted);
    cs.recall = cs.recall_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(cs.support);
    const std::size_t denom = 2 * tp + fp + fn;
    cs.f1 = denom == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(denom);
    if (!(cs.precision_undefined && cs.recall_undefined)) {
      macro_sum += cs.f1;
      ++macro_count;
    }
  }
  s.macro_f1 = macro_count == 0 ? 0.0 : macro_sum / static_cast<double>(macro_count);
  // Summed over classes, FP and FN both equal total - trace.
  const std::size_t tp = matrix.trace();
  const std::size_t wrong = total - tp;
  s.micro_f1 = static_cast<double>(2 * tp) / static_cast<double>(2 * tp + 2 * wrong);
  if (n == 2) s.positive_f1 = s.per_class[1].f1;
  return s;
}

std::string format_scores_table(const Scores& s, std::span<const std::string> class_names) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-14s %9s %9s %9s %8s\n", "class", "precision", "recall", "f1", "support");
  out << buf;
  for (std::size_t c = 0; c < s.per_class.size(); ++c) {
    const auto& cs = s.per_class[c];
    const std::string name = c < class_names.size() ? class_names[c] : std::to_string(c);
    std::snprintf(buf, sizeof buf, "%-14s %9.4f %9.4f %9.4f %8zu%s\n", name.c_str(), cs.precision, cs.recall,
                  cs.f1, cs.support, (cs.precision_undefined || cs.recall_undefined) ? "  *" : "");
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "accuracy %.4f  macro-F1 %.4f  micro-F1 %.4f", s.accuracy, s.macro_f1,
                s.micro_f1);
  out << buf;
  if (s.per_class.size() == 2) {
    std::snprintf(buf, sizeof buf, "  positive-F1 %.4f", s.positive_f1);
    out << buf;
  }
  out << "\n(* undefined precision or recall reported as 0)\n";
  return out.str();
}

std::string scores_to_json(const Scores& s, std::span<const std::string> class_names) {
  nlohmann::json j;
  j["accuracy"] = s.accuracy;
  j["macro_f1"] = s.macro_f1;
  j["micro_f1"] = s.micro_f1;
  if (s.per_class.size() == 2) j["positive_f1"] = s.positive_f1;
  auto& classes = j["per_class"] = nlohmann::json::array();
  for (std::size_t c = 0; c < s.per_class.size(); ++c) {
    const auto& cs = s.per_class[c];
    classes.push_back({{"class", c < class_names.size() ? class_names[c] : std::to_string(c)},
                       {"precision", cs.precision},
                       {"recall", cs.recall},
                       {"f1", cs.f1},
                       {"support", cs.support},
                       {"precision_undefined", cs.precision_undefined},
                       {"recall_undefined", cs.recall_undefined}});
  }
  return j.dump(2);
}

}  // namespace vulndet
