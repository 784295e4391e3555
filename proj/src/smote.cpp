#include "vulndet/smote.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_map>

#include "vulndet/error.hpp"

namespace vulndet {

namespace {

double squared_distance(const Point& a, const Point& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    d += diff * diff;
  }
  return d;
}

Point to_point(const IdVector& ids) { return Point(ids.begin(), ids.end()); }

}  // namespace

std::vector<std::size_t> knn(std::span<const Point> points, std::size_t query, std::size_t k) {
  if (query >= points.size()) throw Error(ErrorCode::IndexOutOfRange, "knn query index out of range");
  if (k == 0 || points.size() <= k) {
    throw Error(ErrorCode::NotEnoughPoints, "knn needs more than k=" + std::to_string(k) +
                                                " points, got " + std::to_string(points.size()));
  }
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(points.size() - 1);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (i == query) continue;
    if (points[i].size() != points[query].size()) {
      throw Error(ErrorCode::DimensionMismatch, "knn point " + std::to_string(i) + " has a different dimension");
    }
    dist.emplace_back(squared_distance(points[i], points[query]), i);
  }
  std::stable_sort(dist.begin(), dist.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = dist[i].second;
  return out;
}

Point synthesize(const Point& a, const Point& b, double lambda) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch, "cannot interpolate vectors of size " +
                                                  std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  Point out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + lambda * (b[i] - a[i]);
  return out;
}

SmoteResult oversample(const std::vector<std::vector<IdVector>>& classes, std::size_t vocab_size,
                       const SmoteConfig& config) {
  if (config.k < 1) throw Error(ErrorCode::InvalidArgument, "SMOTE k must be at least 1");
  if (vocab_size < 1) throw Error(ErrorCode::InvalidArgument, "vocabulary size must be positive");
  std::size_t largest = 0;
  for (const auto& c : classes) largest = std::max(largest, c.size());
  const std::size_t target = config.target_count.value_or(largest);

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double max_id = static_cast<double>(vocab_size - 1);

  SmoteResult result;
  result.classes = classes;
  for (std::size_t ci = 0; ci < classes.size(); ++ci) {
    const auto& members = classes[ci];
    auto& out = result.classes[ci];
    if (members.size() >= target) continue;
    if (members.empty()) {
      result.warnings.push_back("class " + std::to_string(ci) + " is empty and cannot be oversampled");
      continue;
    }
    const std::size_t missing = target - members.size();
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);

    if (members.size() <= config.k) {
      result.warnings.push_back("class " + std::to_string(ci) + " has " + std::to_string(members.size()) +
                                " samples (<= k=" + std::to_string(config.k) +
                                "); oversampled by duplication");
      for (std::size_t n = 0; n < missing; ++n) {
        const std::size_t a = pick(rng);
        out.push_back(members[a]);
        result.synthetic.push_back({ci, a, a, 0.0, true, to_point(members[a])});
      }
      continue;
    }

    std::vector<Point> points;
    points.reserve(members.size());
    for (const auto& m : members) points.push_back(to_point(m));
    std::unordered_map<std::size_t, std::vector<std::size_t>> neighbours;
    std::uniform_int_distribution<std::size_t> pick_neighbour(0, config.k - 1);
    for (std::size_t n = 0; n < missing; ++n) {
      const std::size_t a = pick(rng);
      auto it = neighbours.find(a);
      if (it == neighbours.end()) it = neighbours.emplace(a, knn(points, a, config.k)).first;
      const std::size_t b = it->second[pick_neighbour(rng)];
      const double lambda = unit(rng);
      Point mixed = synthesize(points[a], points[b], lambda);
      IdVector ids(mixed.size());
      for (std::size_t i = 0; i < mixed.size(); ++i) {
        ids[i] = static_cast<std::uint32_t>(std::clamp(std::round(mixed[i]), 0.0, max_id));
      }
      out.push_back(std::move(ids));
      result.synthetic.push_back({ci, a, b, lambda, false, std::move(mixed)});
    }
  }
  return result;
}

}  // namespace vulndet
