#pragma once

#include <cmath>
#include <vector>

#include "mpt/rng.hpp"

namespace mpt {

struct Point3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

// Ordered list of points; order is meaningful for sampling determinism and
// for the index-based tie rules below.
using PointCloud = std::vector<Point3>;

struct Aabb {
  Point3 min, max;
};

inline Point3 operator+(const Point3& a, const Point3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Point3 operator-(const Point3& a, const Point3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Point3 operator*(const Point3& a, double s) { return {a.x * s, a.y * s, a.z * s}; }

inline double dist2(const Point3& a, const Point3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}
inline double dist(const Point3& a, const Point3& b) { return std::sqrt(dist2(a, b)); }
inline double norm(const Point3& a) { return std::sqrt(a.x * a.x + a.y * a.y + a.z * a.z); }

// Axis-aligned bounding box. Throws std::invalid_argument on an empty cloud.
Aabb aabb(const PointCloud& cloud);

// Translate by -centroid, then divide every coordinate by the maximum
// absolute coordinate, so the result lies in [-1,1]^3 with at least one
// coordinate at magnitude 1. Throws if the cloud is empty or all points
// coincide (degenerate scale).
PointCloud normalize_unit(const PointCloud& cloud);

// Farthest point sampling. The first selected index is start_index; each
// subsequent pick maximizes the distance to the already-selected set, ties
// broken toward the lowest index. Prefix property: fps(c, m, s) is a prefix
// of fps(c, n, s) for m <= n. Requires 1 <= count <= |cloud| and a valid
// start index.
std::vector<int> fps(const PointCloud& cloud, int count, int start_index);

// Indices of the k nearest points to center, ascending by distance, ties
// broken toward the lowest index. Requires 1 <= k <= |cloud|.
std::vector<int> knn(const PointCloud& cloud, const Point3& center, int k);

// Symmetric squared-distance Chamfer: mean over a of squared distance to the
// nearest point of b, plus the same in the other direction. Both clouds must
// be non-empty.
double chamfer_l2(const PointCloud& a, const PointCloud& b);

// Minimum distance over all point pairs. Requires at least 2 points.
double min_pairwise_distance(const PointCloud& cloud);

// n points with each coordinate drawn independently and uniformly over the
// box extent, in x,y,z order per point. A degenerate box yields copies of
// the single contained point. Requires n >= 1 and box.min <= box.max.
PointCloud sample_uniform_in_aabb(const Aabb& box, int n, Rng& rng);

}  // namespace mpt
