#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vulndet {

using Point = std::vector<double>;
using IdVector = std::vector<std::uint32_t>;

struct SmoteConfig {
  std::size_t k = 5;
  std::optional<std::size_t> target_count;  // defaults to the largest class
  std::uint64_t seed = 42;
};

/// Indices of the k points nearest (Euclidean) to points[query], excluding
/// the query itself. Ties keep input order. Throws NotEnoughPoints.
std::vector<std::size_t> knn(std::span<const Point> points, std::size_t query, std::size_t k);

/// a + lambda * (b - a). Throws DimensionMismatch.
Point synthesize(const Point& a, const Point& b, double lambda);

/// How one synthetic sample was made; `unrounded` is the interpolated point
/// before rounding and clamping.
struct SyntheticRecord {
  std::size_t class_index = 0;
  std::size_t parent_a = 0;
  std::size_t parent_b = 0;
  double lambda = 0.0;
  bool duplicated = false;  // class too small to interpolate; parent_a was copied
  Point unrounded;
};

struct SmoteResult {
  // Per class: the originals, unmodified and first, then the synthetic samples.
  std::vector<std::vector<IdVector>> classes;
  std::vector<SyntheticRecord> synthetic;
  std::vector<std::string> warnings;
};

/// Oversamples every class up to the target count. Synthetic id vectors are
/// rounded to the nearest integer and clamped to [0, vocab_size - 1]. Classes
/// with at most k samples are padded by duplication and reported in
/// `warnings`; classes already at or above the target are left alone.
SmoteResult oversample(const std::vector<std::vector<IdVector>>& classes, std::size_t vocab_size,
                       const SmoteConfig& config);

}  // namespace vulndet
