#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <optional>
#include <vector>

#include "eqgs/error.hpp"

namespace eqgs {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quaternion = Eigen::Quaterniond;

// Rigid motion: p -> R p + t, rotation kept as a unit quaternion.
struct RigidTransform {
  Quaternion rotation{1.0, 0.0, 0.0, 0.0};
  Vec3 translation{0.0, 0.0, 0.0};

  static RigidTransform identity() { return RigidTransform{}; }
  RigidTransform inverse() const;
  // this ∘ other: apply `other` first, then this.
  RigidTransform compose(const RigidTransform& other) const;
};

// Ordered points with optional per-point descriptor rows (row i <-> point i).
struct PointCloud {
  std::vector<Vec3> points;
  std::optional<Eigen::MatrixXd> descriptors;  // N x 32 when present

  int size() const { return static_cast<int>(points.size()); }
  Eigen::MatrixXd coords_matrix() const;  // N x 3
  void check() const;                     // invariants: nonempty, finite, parallel descriptors
};

Mat3 quat_to_matrix(const Quaternion& q);
Vec3 apply_transform(const RigidTransform& t, const Vec3& p);
PointCloud apply_transform(const RigidTransform& t, const PointCloud& pc);

// One representative (cell centroid) per occupied voxel; output in cell visit order.
// Descriptors are dropped (a centroid is a new point).
PointCloud voxel_downsample(const PointCloud& pc, double voxel);

// Permutation that sorts by descending squared distance to sensor_origin;
// stable on ties.
std::vector<int> ray_length_order(const PointCloud& pc, const Vec3& sensor_origin = Vec3::Zero());

// Sort by descending squared distance to sensor_origin; stable on ties.
PointCloud order_by_ray_length(const PointCloud& pc, const Vec3& sensor_origin = Vec3::Zero());

// Canonical map of a frame pair: x -> (x - center) / scale, taken from the source cloud.
struct CanonicalFrame {
  Vec3 center{0.0, 0.0, 0.0};
  double scale{1.0};

  Vec3 to_canonical(const Vec3& p) const { return (p - center) / scale; }
  // Re-express a canonical-frame pose in the raw frame.
  RigidTransform denormalize(const RigidTransform& t_canonical) const;
  // Conjugate a raw-frame pose into the canonical frame.
  RigidTransform normalize(const RigidTransform& t_raw) const;
};

struct NormalizedPair {
  PointCloud src;
  PointCloud tar;
  RigidTransform gt;  // maps normalized src onto normalized tar
  CanonicalFrame frame;
};

// Center the source at its centroid, scale so its max radius is 1, and express
// the target and ground truth in the same canonical frame.
NormalizedPair normalize_pair(const PointCloud& src, const PointCloud& tar,
                              const RigidTransform& gt = RigidTransform::identity());

CanonicalFrame source_canonical_frame(const PointCloud& src);

}  // namespace eqgs
