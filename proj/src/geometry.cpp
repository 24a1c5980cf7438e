#include "eqgs/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace eqgs {

RigidTransform RigidTransform::inverse() const {
  RigidTransform out;
  out.rotation = rotation.conjugate();
  out.translation = -(out.rotation * translation);
  return out;
}

RigidTransform RigidTransform::compose(const RigidTransform& other) const {
  RigidTransform out;
  out.rotation = (rotation * other.rotation).normalized();
  out.translation = rotation * other.translation + translation;
  return out;
}

Eigen::MatrixXd PointCloud::coords_matrix() const {
  Eigen::MatrixXd m(size(), 3);
  for (int i = 0; i < size(); ++i) m.row(i) = points[i].transpose();
  return m;
}

void PointCloud::check() const {
  if (points.empty()) throw UsageError("point cloud is empty");
  for (const auto& p : points)
    if (!p.allFinite()) throw NumericError("point cloud contains non-finite coordinates");
  if (descriptors) {
    if (descriptors->rows() != size())
      throw UsageError("descriptor row count does not match point count");
    if (!descriptors->allFinite()) throw NumericError("descriptors contain non-finite values");
  }
}

Mat3 quat_to_matrix(const Quaternion& q) {
  const double n = q.norm();
  if (std::abs(n - 1.0) > 1e-6) throw NumericError("quat_to_matrix: quaternion is not unit norm");
  return q.normalized().toRotationMatrix();
}

Vec3 apply_transform(const RigidTransform& t, const Vec3& p) {
  return t.rotation * p + t.translation;
}

PointCloud apply_transform(const RigidTransform& t, const PointCloud& pc) {
  PointCloud out = pc;
  for (auto& p : out.points) p = apply_transform(t, p);
  return out;
}

namespace {

struct CellKey {
  long long x, y, z;
  bool operator==(const CellKey&) const = default;
};

struct CellKeyHash {
  size_t operator()(const CellKey& k) const {
    size_t h = 1469598103934665603ull;
    for (long long v : {k.x, k.y, k.z}) {
      h ^= static_cast<size_t>(v);
      h *= 1099511628211ull;
    }
    return h;
  }
};

CellKey cell_of(const Vec3& p, double voxel) {
  return CellKey{static_cast<long long>(std::floor(p.x() / voxel)),
                 static_cast<long long>(std::floor(p.y() / voxel)),
                 static_cast<long long>(std::floor(p.z() / voxel))};
}

}  // namespace

PointCloud voxel_downsample(const PointCloud& pc, double voxel) {
  pc.check();
  if (!(voxel > 0.0)) throw UsageError("voxel_downsample: voxel size must be > 0");

  std::unordered_map<CellKey, int, CellKeyHash> cell_slot;
  std::vector<Vec3> sums;
  std::vector<int> counts;
  for (const auto& p : pc.points) {
    const CellKey key = cell_of(p, voxel);
    auto [it, inserted] = cell_slot.try_emplace(key, static_cast<int>(sums.size()));
    if (inserted) {
      sums.push_back(p);
      counts.push_back(1);
    } else {
      sums[it->second] += p;
      counts[it->second] += 1;
    }
  }

  PointCloud out;
  out.points.reserve(sums.size());
  for (size_t i = 0; i < sums.size(); ++i) out.points.push_back(sums[i] / counts[i]);
  return out;
}

std::vector<int> ray_length_order(const PointCloud& pc, const Vec3& sensor_origin) {
  pc.check();
  const int n = pc.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> sq(n);
  for (int i = 0; i < n; ++i) sq[i] = (pc.points[i] - sensor_origin).squaredNorm();
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return sq[a] > sq[b]; });
  return order;
}

PointCloud order_by_ray_length(const PointCloud& pc, const Vec3& sensor_origin) {
  const std::vector<int> order = ray_length_order(pc, sensor_origin);
  const int n = pc.size();

  PointCloud out;
  out.points.resize(n);
  for (int i = 0; i < n; ++i) out.points[i] = pc.points[order[i]];
  if (pc.descriptors) {
    Eigen::MatrixXd d(n, pc.descriptors->cols());
    for (int i = 0; i < n; ++i) d.row(i) = pc.descriptors->row(order[i]);
    out.descriptors = std::move(d);
  }
  return out;
}

CanonicalFrame source_canonical_frame(const PointCloud& src) {
  src.check();
  Vec3 center = Vec3::Zero();
  for (const auto& p : src.points) center += p;
  center /= src.size();
  double radius = 0.0;
  for (const auto& p : src.points) radius = std::max(radius, (p - center).norm());
  if (radius < 1e-12)
    throw UsageError("normalize_pair: degenerate source cloud (all points coincident)");
  return CanonicalFrame{center, radius};
}

RigidTransform CanonicalFrame::normalize(const RigidTransform& t_raw) const {
  // y = R x + t  with  x = s x' + c,  y = s y' + c   =>   y' = R x' + (R c + t - c)/s
  RigidTransform out;
  out.rotation = t_raw.rotation;
  out.translation = (t_raw.rotation * center + t_raw.translation - center) / scale;
  return out;
}

RigidTransform CanonicalFrame::denormalize(const RigidTransform& t_canonical) const {
  RigidTransform out;
  out.rotation = t_canonical.rotation;
  out.translation = scale * t_canonical.translation + center - t_canonical.rotation * center;
  return out;
}

NormalizedPair normalize_pair(const PointCloud& src, const PointCloud& tar,
                              const RigidTransform& gt) {
  src.check();
  tar.check();
  const CanonicalFrame frame = source_canonical_frame(src);

  NormalizedPair out;
  out.frame = frame;
  out.src = src;
  out.tar = tar;
  for (auto& p : out.src.points) p = frame.to_canonical(p);
  for (auto& p : out.tar.points) p = frame.to_canonical(p);
  out.gt = frame.normalize(gt);
  return out;
}

}  // namespace eqgs
