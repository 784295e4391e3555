#include "vulndet/cascade.hpp"

#include <algorithm>
#include <numeric>

namespace vulndet {

std::string_view to_string(Verdict v) {
  return v == Verdict::Vulnerable ? "Vulnerable" : "NonVulnerable";
}

std::vector<double> to_distribution(std::span<const double> row) {
  std::vector<double> out(row.begin(), row.end());
  const double total = std::accumulate(out.begin(), out.end(), 0.0);
  if (total > 0) {
    for (auto& v : out) v /= total;
  }
  return out;
}

Cascade::Cascade(const Model& stage1, const Model& stage2, const Vocabulary& vocab, double threshold,
                 NormalizerOptions options)
    : stage1_(stage1),
      stage2_(stage2),
      vocab_(vocab),
      labels_(stage2.labels),
      threshold_(threshold),
      options_(std::move(options)) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "threshold must lie strictly between 0 and 1");
  }
  if (stage1.spec().output_width() != 1) {
    throw Error(ErrorCode::IncompatibleSpec, "stage-1 model must have a single output");
  }
  const std::size_t classes = stage2.spec().output_width();
  if (labels_.size() != classes) {
    throw Error(ErrorCode::IncompatibleSpec, "stage-2 head has " + std::to_string(classes) +
                                                 " outputs but the label map has " +
                                                 std::to_string(labels_.size()) + " entries");
  }
  const std::string hash = vocab.hash();
  for (const Model* m : {&stage1, &stage2}) {
    if (m->vocab_hash != hash) {
      throw Error(ErrorCode::VocabHashMismatch, "model was trained with vocabulary " + m->vocab_hash +
                                                    " but the supplied vocabulary hashes to " + hash);
    }
  }
}

std::vector<Prediction> Cascade::predict_batch(std::span<const IdVector> rows) const {
  std::vector<Prediction> out(rows.size());
  if (rows.empty()) return out;
  const Tensor p1 = stage1_.forward(make_id_batch(rows, stage1_.spec().input_length));
  stage1_count_ += rows.size();

  std::vector<IdVector> positives;
  std::vector<std::size_t> where;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out[i].stage1_probability = p1.at(i, 0);
    if (out[i].stage1_probability >= threshold_) {
      out[i].verdict = Verdict::Vulnerable;
      positives.push_back(rows[i]);
      where.push_back(i);
    }
  }
  if (positives.empty()) return out;

  const Tensor p2 = stage2_.forward(make_id_batch(positives, stage2_.spec().input_length));
  stage2_count_ += positives.size();
  const std::size_t classes = p2.dim(1);
  for (std::size_t j = 0; j < positives.size(); ++j) {
    auto dist = to_distribution(std::span<const double>(p2.data() + j * classes, classes));
    const auto best = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
    Prediction& p = out[where[j]];
    p.predicted_cwe = labels_.cwe_of(best);
    p.class_distribution = std::move(dist);
  }
  return out;
}

Prediction Cascade::predict_encoded(const IdVector& ids) const {
  return predict_batch(std::span<const IdVector>(&ids, 1)).front();
}

Prediction Cascade::predict(std::string_view source) const {
  const NormalizedSample sample = normalize_source(source, options_);
  const std::size_t len = std::max(stage1_.spec().input_length, stage2_.spec().input_length);
  // Prefix truncation makes the shorter encoding a prefix of the longer one.
  const EncodedSample encoded = encode(sample, vocab_, len);
  Prediction p = predict_encoded(encoded.ids);
  p.flagged = sample.flagged;
  return p;
}

}  // namespace vulndet
