#pragma once

#include <string>
#include <vector>

#include "mpt/geometry.hpp"
#include "mpt/rng.hpp"

namespace mpt {

enum class MaskMode { random, block };

struct MaskConfig {
  double ratio = 0.9;
  MaskMode mode = MaskMode::random;
  int n_queries = 64;
  // FPS count used for the ambiguity radius gamma; 0 means "use the patch
  // count of the model being trained".
  int gamma_fps_count = 0;
};

// Disjoint index partition of the patch groups; both lists ascending.
struct MaskPartition {
  std::vector<int> masked;
  std::vector<int> unmasked;
  double ratio = 0.0;
};

// Query points for the occupancy discrimination task. real_points lie on the
// masked portion of the object (label 1), fake_points are box samples at
// distance >= gamma from every object point (label 0). fake_points may be
// shorter than requested, or empty, when gamma rejects nearly the whole box.
struct QuerySet {
  PointCloud real_points;
  PointCloud fake_points;
  double gamma = 0.0;
};

// Masks round(n_groups * ratio) group indices chosen uniformly without
// replacement. ratio must leave at least one group unmasked.
MaskPartition random_mask(int n_groups, double ratio, Rng& rng);

// Masks the round(S * ratio) centers nearest to one uniformly chosen seed
// center (the seed included), distance ties toward the lower index.
MaskPartition block_mask(const PointCloud& centers, double ratio, Rng& rng);

// Same, with the seed center fixed (exposed for tests).
MaskPartition block_mask_from_seed(const PointCloud& centers, double ratio, int seed_index);

// gamma = minimum pairwise distance among fps(cloud, fps_count, 0). The
// discrimination margin: fake queries closer than gamma to any object point
// are too ambiguous to label as unoccupied.
double compute_gamma(const PointCloud& cloud, int fps_count);

// True when p is within distance gamma of some cloud point, i.e. p must be
// rejected as a fake query.
bool query_too_close(const Point3& p, const PointCloud& cloud, double gamma);

// Draws n_queries real queries uniformly from masked_points (without
// replacement when possible, with replacement when fewer are available) and
// up to n_queries fakes uniformly from aabb(cloud), rejecting fakes within
// gamma of any cloud point. Rejection stops after 50 * n_queries total
// draws; an empty fake set is a valid outcome, not an error.
QuerySet sample_queries(const PointCloud& cloud, const PointCloud& masked_points, int n_queries,
                        double gamma, Rng& rng);

// "random" / "block", for configs and checkpoints.
const char* mask_mode_name(MaskMode mode);
MaskMode mask_mode_from_name(const std::string& name);

}  // namespace mpt
