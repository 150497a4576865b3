#include "mpt/dataset.hpp"

#include <cmath>
#include <stdexcept>

namespace mpt {

namespace {

constexpr double kPi = 3.14159265358979323846;

Point3 sample_sphere(Rng& rng) {
  // Isotropic direction via normalized Gaussian triple; retry the (measure
  // zero) degenerate draw.
  for (;;) {
    const double x = rng.normal(), y = rng.normal(), z = rng.normal();
    const double n = std::sqrt(x * x + y * y + z * z);
    if (n > 1e-12) return {x / n, y / n, z / n};
  }
}

Point3 sample_cube_surface(Rng& rng) {
  // Only the three positive faces are drawn; antipodal pairing covers the
  // rest.
  const uint64_t face = rng.below(3);
  const double u = rng.uniform(-1.0, 1.0);
  const double v = rng.uniform(-1.0, 1.0);
  switch (face) {
    case 0: return {1.0, u, v};
    case 1: return {u, 1.0, v};
    default: return {u, v, 1.0};
  }
}

Point3 sample_torus(double ring_r, double tube_r, Rng& rng) {
  // Uniform area: tube angle accepted with weight proportional to the local
  // circumference (R + r cos t).
  double t;
  for (;;) {
    t = rng.uniform(0.0, 2.0 * kPi);
    const double w = (ring_r + tube_r * std::cos(t)) / (ring_r + tube_r);
    if (rng.uniform() < w) break;
  }
  const double phi = rng.uniform(0.0, 2.0 * kPi);
  const double rad = ring_r + tube_r * std::cos(t);
  return {rad * std::cos(phi), rad * std::sin(phi), tube_r * std::sin(t)};
}

Point3 sample_cylinder(double radius, double half_h, Rng& rng) {
  // Side vs top cap chosen by area; the bottom cap comes from pairing.
  const double side_area = 2.0 * kPi * radius * 2.0 * half_h;
  const double cap_area = kPi * radius * radius;  // one cap
  const double p_side = side_area / (side_area + 2.0 * cap_area);
  if (rng.uniform() < p_side) {
    const double phi = rng.uniform(0.0, 2.0 * kPi);
    const double z = rng.uniform(-half_h, half_h);
    return {radius * std::cos(phi), radius * std::sin(phi), z};
  }
  const double rho = radius * std::sqrt(rng.uniform());
  const double phi = rng.uniform(0.0, 2.0 * kPi);
  return {rho * std::cos(phi), rho * std::sin(phi), half_h};
}

// Random rotation: isotropic axis, angle uniform in [0, max_angle],
// composed via Rodrigues' formula.
void rotate_tilted(PointCloud& cloud, double max_angle, Rng& rng) {
  const Point3 axis = [&rng] {
    for (;;) {
      const double x = rng.normal(), y = rng.normal(), z = rng.normal();
      const double n = std::sqrt(x * x + y * y + z * z);
      if (n > 1e-12) return Point3{x / n, y / n, z / n};
    }
  }();
  const double angle = rng.uniform(0.0, max_angle);
  const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  const double ux = axis.x, uy = axis.y, uz = axis.z;
  const double m[3][3] = {
      {c + ux * ux * t, ux * uy * t - uz * s, ux * uz * t + uy * s},
      {uy * ux * t + uz * s, c + uy * uy * t, uy * uz * t - ux * s},
      {uz * ux * t - uy * s, uz * uy * t + ux * s, c + uz * uz * t}};
  for (Point3& p : cloud) {
    const double px = p.x, py = p.y, pz = p.z;
    p.x = m[0][0] * px + m[0][1] * py + m[0][2] * pz;
    p.y = m[1][0] * px + m[1][1] * py + m[1][2] * pz;
    p.z = m[2][0] * px + m[2][1] * py + m[2][2] * pz;
  }
}

}  // namespace

const char* shape_name(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::sphere: return "sphere";
    case ShapeKind::cube_surface: return "cube";
    case ShapeKind::torus: return "torus";
    case ShapeKind::cylinder: return "cylinder";
  }
  throw std::invalid_argument("shape_name: unknown kind");
}

ShapeKind shape_from_label(int label) {
  switch (label) {
    case 0: return ShapeKind::sphere;
    case 1: return ShapeKind::cube_surface;
    case 2: return ShapeKind::torus;
    case 3: return ShapeKind::cylinder;
  }
  throw std::invalid_argument("shape_from_label: label out of range");
}

PointCloud gen_shape(ShapeKind kind, int n_points, double jitter, Rng& rng) {
  if (n_points < 8 || n_points % 2 != 0)
    throw std::invalid_argument("gen_shape: n_points must be even and >= 8");
  if (jitter < 0.0) throw std::invalid_argument("gen_shape: jitter must be >= 0");

  // Per-cloud free parameters, drawn before any surface point.
  double tube_r = 0.0, ring_r = 0.0, cyl_r = 0.0, cyl_h = 0.0;
  if (kind == ShapeKind::torus) {
    tube_r = rng.uniform(0.2, 0.45);
    ring_r = 1.0 - tube_r;
  } else if (kind == ShapeKind::cylinder) {
    cyl_r = rng.uniform(0.3, 0.8);
    cyl_h = rng.uniform(0.5, 1.0);
  }

  PointCloud cloud;
  cloud.reserve(size_t(n_points));
  for (int i = 0; i < n_points / 2; ++i) {
    Point3 p;
    switch (kind) {
      case ShapeKind::sphere: p = sample_sphere(rng); break;
      case ShapeKind::cube_surface: p = sample_cube_surface(rng); break;
      case ShapeKind::torus: p = sample_torus(ring_r, tube_r, rng); break;
      case ShapeKind::cylinder: p = sample_cylinder(cyl_r, cyl_h, rng); break;
    }
    cloud.push_back(p);
    cloud.push_back({-p.x, -p.y, -p.z});
  }

  if (jitter > 0.0) {
    for (Point3& p : cloud) {
      p.x += rng.normal() * jitter;
      p.y += rng.normal() * jitter;
      p.z += rng.normal() * jitter;
    }
  }
  return normalize_unit(cloud);
}

namespace {

LabeledCloud make_cloud(const DatasetSpec& spec, uint64_t cloud_seed, int label) {
  Rng rng(cloud_seed);
  PointCloud cloud = gen_shape(shape_from_label(label), spec.n_points, spec.jitter, rng);
  if (spec.stretch_min < spec.stretch_max || spec.stretch_min != 1.0) {
    const double sx = rng.uniform(spec.stretch_min, spec.stretch_max);
    const double sy = rng.uniform(spec.stretch_min, spec.stretch_max);
    const double sz = rng.uniform(spec.stretch_min, spec.stretch_max);
    for (Point3& p : cloud) {
      p.x *= sx;
      p.y *= sy;
      p.z *= sz;
    }
    cloud = normalize_unit(cloud);
  }
  if (spec.max_tilt > 0.0) rotate_tilted(cloud, spec.max_tilt, rng);
  return {std::move(cloud), label};
}

}  // namespace

Dataset make_dataset(const DatasetSpec& spec, uint64_t seed) {
  if (spec.n_train < 1 || spec.n_test < 1) throw std::invalid_argument("make_dataset: empty split");
  if (spec.stretch_min <= 0.0 || spec.stretch_max < spec.stretch_min || spec.max_tilt < 0.0)
    throw std::invalid_argument("make_dataset: bad pose/aspect range");
  Dataset ds;
  const uint64_t train_seed = derive_seed(seed, 1);
  const uint64_t test_seed = derive_seed(seed, 2);
  ds.train.reserve(size_t(spec.n_train));
  for (int i = 0; i < spec.n_train; ++i)
    ds.train.push_back(make_cloud(spec, derive_seed(train_seed, uint64_t(i)), i % kNumShapeClasses));
  ds.test.reserve(size_t(spec.n_test));
  for (int i = 0; i < spec.n_test; ++i)
    ds.test.push_back(make_cloud(spec, derive_seed(test_seed, uint64_t(i)), i % kNumShapeClasses));
  return ds;
}

}  // namespace mpt
