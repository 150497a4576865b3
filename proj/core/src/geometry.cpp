#include "mpt/geometry.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

namespace mpt {

Aabb aabb(const PointCloud& cloud) {
  if (cloud.empty()) throw std::invalid_argument("aabb: empty cloud");
  Aabb box{cloud[0], cloud[0]};
  for (const Point3& p : cloud) {
    box.min.x = std::min(box.min.x, p.x);
    box.min.y = std::min(box.min.y, p.y);
    box.min.z = std::min(box.min.z, p.z);
    box.max.x = std::max(box.max.x, p.x);
    box.max.y = std::max(box.max.y, p.y);
    box.max.z = std::max(box.max.z, p.z);
  }
  return box;
}

PointCloud normalize_unit(const PointCloud& cloud) {
  if (cloud.empty()) throw std::invalid_argument("normalize_unit: empty cloud");
  Point3 c{0, 0, 0};
  for (const Point3& p : cloud) {
    c.x += p.x;
    c.y += p.y;
    c.z += p.z;
  }
  const double n = double(cloud.size());
  c.x /= n;
  c.y /= n;
  c.z /= n;

  double m = 0.0;
  for (const Point3& p : cloud) {
    m = std::max(m, std::abs(p.x - c.x));
    m = std::max(m, std::abs(p.y - c.y));
    m = std::max(m, std::abs(p.z - c.z));
  }
  if (m == 0.0) throw std::invalid_argument("normalize_unit: all points coincide");

  PointCloud out;
  out.reserve(cloud.size());
  // Division (not multiplication by 1/m) so the extreme coordinate maps to
  // exactly +-1.
  for (const Point3& p : cloud)
    out.push_back({(p.x - c.x) / m, (p.y - c.y) / m, (p.z - c.z) / m});
  return out;
}

std::vector<int> fps(const PointCloud& cloud, int count, int start_index) {
  const int n = int(cloud.size());
  if (n == 0) throw std::invalid_argument("fps: empty cloud");
  if (count < 1 || count > n)
    throw std::invalid_argument("fps: count must be in [1, cloud size], got " + std::to_string(count));
  if (start_index < 0 || start_index >= n)
    throw std::invalid_argument("fps: start index out of range");

  std::vector<int> selected;
  selected.reserve(size_t(count));
  selected.push_back(start_index);

  std::vector<double> min_d2(size_t(n), std::numeric_limits<double>::infinity());
  std::vector<char> taken(size_t(n), 0);
  taken[size_t(start_index)] = 1;
  int last = start_index;

  for (int round = 1; round < count; ++round) {
    for (int i = 0; i < n; ++i)
      min_d2[size_t(i)] = std::min(min_d2[size_t(i)], dist2(cloud[size_t(i)], cloud[size_t(last)]));
    int best = -1;
    double best_d = -1.0;
    for (int i = 0; i < n; ++i) {
      if (taken[size_t(i)]) continue;
      if (min_d2[size_t(i)] > best_d) {  // strict: ties keep the lowest index
        best_d = min_d2[size_t(i)];
        best = i;
      }
    }
    selected.push_back(best);
    taken[size_t(best)] = 1;
    last = best;
  }
  return selected;
}

std::vector<int> knn(const PointCloud& cloud, const Point3& center, int k) {
  const int n = int(cloud.size());
  if (n == 0) throw std::invalid_argument("knn: empty cloud");
  if (k < 1 || k > n)
    throw std::invalid_argument("knn: k must be in [1, cloud size], got " + std::to_string(k));

  std::vector<std::pair<double, int>> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[size_t(i)] = {dist2(cloud[size_t(i)], center), i};
  // (distance, index) pairs: equal distances resolve toward the lower index.
  std::sort(order.begin(), order.end());

  std::vector<int> out(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) out[size_t(i)] = order[size_t(i)].second;
  return out;
}

double chamfer_l2(const PointCloud& a, const PointCloud& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("chamfer_l2: empty cloud");
  double total = 0.0;
  for (const Point3& p : a) {
    double best = std::numeric_limits<double>::infinity();
    for (const Point3& q : b) best = std::min(best, dist2(p, q));
    total += best;
  }
  double forward = total / double(a.size());
  total = 0.0;
  for (const Point3& q : b) {
    double best = std::numeric_limits<double>::infinity();
    for (const Point3& p : a) best = std::min(best, dist2(q, p));
    total += best;
  }
  return forward + total / double(b.size());
}

double min_pairwise_distance(const PointCloud& cloud) {
  const size_t n = cloud.size();
  if (n < 2) throw std::invalid_argument("min_pairwise_distance: need at least 2 points");
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i + 1 < n; ++i)
    for (size_t j = i + 1; j < n; ++j) best = std::min(best, dist2(cloud[i], cloud[j]));
  return std::sqrt(best);
}

PointCloud sample_uniform_in_aabb(const Aabb& box, int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_uniform_in_aabb: n must be >= 1");
  if (box.min.x > box.max.x || box.min.y > box.max.y || box.min.z > box.max.z)
    throw std::invalid_argument("sample_uniform_in_aabb: inverted box");
  PointCloud out;
  out.reserve(size_t(n));
  for (int i = 0; i < n; ++i) {
    Point3 p;
    p.x = rng.uniform(box.min.x, box.max.x);
    p.y = rng.uniform(box.min.y, box.max.y);
    p.z = rng.uniform(box.min.z, box.max.z);
    out.push_back(p);
  }
  return out;
}

}  // namespace mpt
