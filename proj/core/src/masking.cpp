#include "mpt/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mpt {
namespace {

int masked_count(int n_groups, double ratio) {
  if (n_groups < 2) throw std::invalid_argument("mask: need at least 2 groups");
  if (ratio < 0.0 || ratio >= 1.0)
    throw std::invalid_argument("mask: ratio must be in [0,1), got " + std::to_string(ratio));
  int m = int(std::lround(double(n_groups) * ratio));
  if (m > n_groups - 1)
    throw std::invalid_argument("mask: ratio " + std::to_string(ratio) + " leaves no unmasked group");
  return m;
}

MaskPartition partition_from_masked(int n_groups, std::vector<int> masked, double ratio) {
  std::sort(masked.begin(), masked.end());
  std::vector<char> is_masked(size_t(n_groups), 0);
  for (int i : masked) is_masked[size_t(i)] = 1;
  MaskPartition part;
  part.masked = std::move(masked);
  part.ratio = ratio;
  part.unmasked.reserve(size_t(n_groups) - part.masked.size());
  for (int i = 0; i < n_groups; ++i)
    if (!is_masked[size_t(i)]) part.unmasked.push_back(i);
  return part;
}

}  // namespace

MaskPartition random_mask(int n_groups, double ratio, Rng& rng) {
  const int m = masked_count(n_groups, ratio);
  // Partial Fisher-Yates: the first m slots of a shuffled identity are a
  // uniform without-replacement sample.
  std::vector<int> idx(static_cast<size_t>(n_groups));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < m; ++i) {
    int j = i + int(rng.below(uint64_t(n_groups - i)));
    std::swap(idx[size_t(i)], idx[size_t(j)]);
  }
  return partition_from_masked(n_groups, {idx.begin(), idx.begin() + m}, ratio);
}

MaskPartition block_mask_from_seed(const PointCloud& centers, double ratio, int seed_index) {
  const int n = int(centers.size());
  const int m = masked_count(n, ratio);
  if (seed_index < 0 || seed_index >= n) throw std::invalid_argument("block_mask: seed index out of range");
  if (m == 0) return partition_from_masked(n, {}, ratio);
  std::vector<int> nearest = knn(centers, centers[size_t(seed_index)], m);
  return partition_from_masked(n, std::move(nearest), ratio);
}

MaskPartition block_mask(const PointCloud& centers, double ratio, Rng& rng) {
  if (centers.size() < 2) throw std::invalid_argument("block_mask: need at least 2 centers");
  const int seed = int(rng.below(centers.size()));
  return block_mask_from_seed(centers, ratio, seed);
}

double compute_gamma(const PointCloud& cloud, int fps_count) {
  if (fps_count < 2) throw std::invalid_argument("compute_gamma: fps count must be >= 2");
  std::vector<int> idx = fps(cloud, fps_count, 0);
  PointCloud pts;
  pts.reserve(idx.size());
  for (int i : idx) pts.push_back(cloud[size_t(i)]);
  return min_pairwise_distance(pts);
}

bool query_too_close(const Point3& p, const PointCloud& cloud, double gamma) {
  const double g2 = gamma * gamma;
  for (const Point3& q : cloud)
    if (dist2(p, q) < g2) return true;
  return false;
}

QuerySet sample_queries(const PointCloud& cloud, const PointCloud& masked_points, int n_queries,
                        double gamma, Rng& rng) {
  if (cloud.empty()) throw std::invalid_argument("sample_queries: empty cloud");
  if (masked_points.empty()) throw std::invalid_argument("sample_queries: no masked points to sample from");
  if (n_queries < 1) throw std::invalid_argument("sample_queries: n_queries must be >= 1");
  if (gamma < 0.0) throw std::invalid_argument("sample_queries: negative gamma");

  QuerySet qs;
  qs.gamma = gamma;
  qs.real_points.reserve(size_t(n_queries));
  const int n_masked = int(masked_points.size());
  if (n_masked >= n_queries) {
    std::vector<int> idx(static_cast<size_t>(n_masked));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < n_queries; ++i) {
      int j = i + int(rng.below(uint64_t(n_masked - i)));
      std::swap(idx[size_t(i)], idx[size_t(j)]);
      qs.real_points.push_back(masked_points[size_t(idx[size_t(i)])]);
    }
  } else {
    for (int i = 0; i < n_queries; ++i)
      qs.real_points.push_back(masked_points[size_t(rng.below(uint64_t(n_masked)))]);
  }

  const Aabb box = aabb(cloud);
  const long cap = 50L * n_queries;
  long draws = 0;
  while (int(qs.fake_points.size()) < n_queries && draws < cap) {
    PointCloud p = sample_uniform_in_aabb(box, 1, rng);
    ++draws;
    if (!query_too_close(p[0], cloud, gamma)) qs.fake_points.push_back(p[0]);
  }
  return qs;
}

const char* mask_mode_name(MaskMode mode) {
  switch (mode) {
    case MaskMode::random: return "random";
    case MaskMode::block: return "block";
  }
  throw std::invalid_argument("mask_mode_name: unknown mode");
}

MaskMode mask_mode_from_name(const std::string& name) {
  if (name == "random") return MaskMode::random;
  if (name == "block") return MaskMode::block;
  throw std::invalid_argument("mask_mode_from_name: expected 'random' or 'block', got '" + name + "'");
}

}  // namespace mpt
