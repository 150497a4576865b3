#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mpt/geometry.hpp"
#include "mpt/rng.hpp"

namespace mpt {

enum class ShapeKind { sphere, cube_surface, torus, cylinder };

inline constexpr int kNumShapeClasses = 4;

const char* shape_name(ShapeKind kind);
ShapeKind shape_from_label(int label);  // label in [0, kNumShapeClasses)

// Samples n_points from the shape's surface, adds Gaussian coordinate noise
// of the given sigma, and rescales to the unit box (see normalize_unit).
//
// Points are emitted as antipodal pairs (p, -p); every shape here is
// centrosymmetric, so this is still a uniform surface sampling, and at
// jitter 0 the sample centroid is exactly zero. That keeps the noise-free
// clouds exactly centered: cube faces land on +-1 and sphere norms are
// constant after rescaling. n_points must therefore be even.
//
// Shapes with free parameters draw them per call: the torus tube radius and
// the cylinder radius/half-height vary cloud to cloud, so class identity is
// a matter of structure rather than fixed size.
PointCloud gen_shape(ShapeKind kind, int n_points, double jitter, Rng& rng);

struct LabeledCloud {
  PointCloud cloud;
  int label = 0;
};

struct DatasetSpec {
  int n_train = 512;
  int n_test = 128;
  int n_points = 256;
  double jitter = 0.01;
  // Per-cloud pose and aspect variation, applied after gen_shape. Defaults
  // keep the classes separable only through surface structure: canonical
  // poses and unit aspect make them separable from raw coordinates alone,
  // which would let a frozen random encoder probe as well as a pretrained
  // one.
  double max_tilt = 3.14159265358979323846;  // radians; 0 disables
  double stretch_min = 0.55;                 // per-axis scale draw, <= 1
  double stretch_max = 1.0;
};

struct Dataset {
  std::vector<LabeledCloud> train, test;
};

// Deterministic dataset: cloud i of each split has label i mod 4 and its own
// rng derived from (seed, split, i), so any single cloud can be regenerated
// without producing the rest.
//
// Each cloud is put into a uniformly random orientation after generation.
// Canonical poses make the four classes separable from raw coordinates
// alone; random poses force classification to depend on surface structure,
// which is what the probe is meant to measure. Rotation about the origin
// preserves the centering and unit bound that gen_shape establishes.
Dataset make_dataset(const DatasetSpec& spec, uint64_t seed);

}  // namespace mpt
