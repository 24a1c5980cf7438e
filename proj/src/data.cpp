#include "eqgs/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "eqgs/ply_io.hpp"

namespace eqgs {

namespace fs = std::filesystem;
using nn::Rng;

void SceneConfig::validate() const {
  if (num_points < 64) throw UsageError("scene config: num_points must be >= 64");
  if (!(overlap > 0.0 && overlap <= 1.0)) throw UsageError("scene config: overlap must be in (0, 1]");
  if (!(outlier >= 0.0 && outlier < 1.0)) throw UsageError("scene config: outlier must be in [0, 1)");
  if (noise_sigma < 0.0) throw UsageError("scene config: noise_sigma must be >= 0");
  if (max_angle_deg < 0.0 || max_angle_deg > 180.0)
    throw UsageError("scene config: max_angle_deg must be in [0, 180]");
  if (max_translation < 0.0) throw UsageError("scene config: max_translation must be >= 0");
  const long matches = std::lround(overlap * num_points);
  const long outliers = std::lround(outlier * num_points);
  if (matches + outliers > num_points)
    throw UsageError("scene config: overlap + outlier fractions exceed the point budget");
}

void ScenePair::check() const {
  src.check();
  tar.check();
  const double bound = 3.0 * noise_sigma + 1e-9;
  for (const auto& [i, j] : gt_correspondences) {
    if (i < 0 || i >= src.size() || j < 0 || j >= tar.size())
      throw UsageError("scene pair: correspondence index out of range");
    const double d = (apply_transform(gt, src.points[i]) - tar.points[j]).norm();
    if (d > bound) throw NumericError("scene pair: correspondence violates the noise bound");
  }
}

namespace {

struct Primitive {
  enum Kind { Plane, Sphere, Box } kind;
  Vec3 center;
  Mat3 axes;     // columns are the local frame
  Vec3 extents;  // plane: (a, b, -), sphere: (radius, -, -), box: half extents
};

Mat3 random_rotation(Rng& rng) {
  // normalized random quaternion
  Eigen::Vector4d q;
  for (int i = 0; i < 4; ++i) q(i) = rng.normal(0.0, 1.0);
  q.normalize();
  return Quaternion(q(0), q(1), q(2), q(3)).toRotationMatrix();
}

std::vector<Primitive> random_primitives(Rng& rng) {
  const int count = 3 + static_cast<int>(rng.raw() % 4);  // 3..6
  std::vector<Primitive> prims;
  for (int p = 0; p < count; ++p) {
    Primitive prim;
    const uint64_t kind = rng.raw() % 3;
    prim.kind = kind == 0 ? Primitive::Plane : (kind == 1 ? Primitive::Sphere : Primitive::Box);
    prim.center = Vec3(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6));
    prim.axes = random_rotation(rng);
    switch (prim.kind) {
      case Primitive::Plane:
        prim.extents = Vec3(rng.uniform(0.25, 0.6), rng.uniform(0.25, 0.6), 0.0);
        break;
      case Primitive::Sphere:
        prim.extents = Vec3(rng.uniform(0.15, 0.4), 0.0, 0.0);
        break;
      case Primitive::Box:
        prim.extents = Vec3(rng.uniform(0.15, 0.45), rng.uniform(0.15, 0.45),
                            rng.uniform(0.15, 0.45));
        break;
    }
    prims.push_back(prim);
  }
  return prims;
}

Vec3 sample_primitive(const Primitive& prim, Rng& rng) {
  switch (prim.kind) {
    case Primitive::Plane: {
      const double u = rng.uniform(-1.0, 1.0) * prim.extents.x();
      const double v = rng.uniform(-1.0, 1.0) * prim.extents.y();
      return prim.center + prim.axes.col(0) * u + prim.axes.col(1) * v;
    }
    case Primitive::Sphere: {
      Vec3 dir(rng.normal(0.0, 1.0), rng.normal(0.0, 1.0), rng.normal(0.0, 1.0));
      const double n = dir.norm();
      if (n < 1e-12) return prim.center + Vec3(prim.extents.x(), 0, 0);
      return prim.center + dir / n * prim.extents.x();
    }
    case Primitive::Box: {
      const int axis = static_cast<int>(rng.raw() % 3);
      const double side = (rng.raw() % 2 == 0) ? 1.0 : -1.0;
      Vec3 local;
      for (int a = 0; a < 3; ++a)
        local(a) = (a == axis) ? side * prim.extents(a)
                               : rng.uniform(-1.0, 1.0) * prim.extents(a);
      return prim.center + prim.axes * local;
    }
  }
  return prim.center;
}

Vec3 truncated_noise(Rng& rng, double sigma) {
  if (sigma <= 0.0) return Vec3::Zero();
  for (int attempt = 0; attempt < 64; ++attempt) {
    Vec3 n(rng.normal(0.0, sigma), rng.normal(0.0, sigma), rng.normal(0.0, sigma));
    if (n.norm() <= 3.0 * sigma) return n;
  }
  return Vec3::Zero();
}

RigidTransform random_transform(Rng& rng, double max_angle_deg, double max_translation) {
  Vec3 axis(rng.normal(0.0, 1.0), rng.normal(0.0, 1.0), rng.normal(0.0, 1.0));
  if (axis.norm() < 1e-12) axis = Vec3::UnitZ();
  axis.normalize();
  const double angle = rng.uniform(0.0, max_angle_deg) * kPi / 180.0;
  Vec3 dir(rng.normal(0.0, 1.0), rng.normal(0.0, 1.0), rng.normal(0.0, 1.0));
  if (dir.norm() < 1e-12) dir = Vec3::UnitX();
  dir.normalize();
  const double radius = max_translation * std::cbrt(rng.uniform());  // uniform in the ball

  RigidTransform t;
  t.rotation = Quaternion(Eigen::AngleAxisd(angle, axis));
  if (t.rotation.w() < 0.0) t.rotation.coeffs() = -t.rotation.coeffs();
  t.translation = dir * radius;
  return t;
}

}  // namespace

ScenePair generate_scene_pair(const SceneConfig& config, uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const int n = config.num_points;

  const auto prims = random_primitives(rng);
  PointCloud src;
  src.points.reserve(n);
  for (int i = 0; i < n; ++i)
    src.points.push_back(sample_primitive(prims[rng.raw() % prims.size()], rng));

  const RigidTransform gt = random_transform(rng, config.max_angle_deg, config.max_translation);

  // spatially coherent overlap region: lowest projections onto a random direction
  const int n_match = static_cast<int>(std::lround(config.overlap * n));
  Vec3 cut(rng.normal(0.0, 1.0), rng.normal(0.0, 1.0), rng.normal(0.0, 1.0));
  if (cut.norm() < 1e-12) cut = Vec3::UnitX();
  cut.normalize();
  std::vector<int> by_proj(n);
  std::iota(by_proj.begin(), by_proj.end(), 0);
  std::stable_sort(by_proj.begin(), by_proj.end(), [&](int a, int b) {
    return src.points[a].dot(cut) < src.points[b].dot(cut);
  });

  const int n_outlier =
      std::min<int>(static_cast<int>(std::lround(config.outlier * n)), n - n_match);
  const int n_filler = n - n_match - n_outlier;

  std::vector<Vec3> tar_points;
  std::vector<int> tar_match_src;  // source index per target slot, -1 for none
  tar_points.reserve(n);
  for (int m = 0; m < n_match; ++m) {
    const int i = by_proj[m];
    tar_points.push_back(apply_transform(gt, src.points[i]) +
                         truncated_noise(rng, config.noise_sigma));
    tar_match_src.push_back(i);
  }

  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& p : src.points) {
    const Vec3 q = apply_transform(gt, p);
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  const Vec3 margin = 0.2 * (hi - lo).cwiseMax(Vec3::Constant(1e-3));
  for (int o = 0; o < n_outlier; ++o) {
    Vec3 p;
    for (int a = 0; a < 3; ++a) p(a) = rng.uniform(lo(a) - margin(a), hi(a) + margin(a));
    tar_points.push_back(p);
    tar_match_src.push_back(-1);
  }
  for (int f = 0; f < n_filler; ++f) {
    const Vec3 p = sample_primitive(prims[rng.raw() % prims.size()], rng);
    tar_points.push_back(apply_transform(gt, p) + truncated_noise(rng, config.noise_sigma));
    tar_match_src.push_back(-1);
  }

  // deterministic shuffle so matches are not index-aligned
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n - 1; i > 0; --i)
    std::swap(perm[i], perm[rng.raw() % static_cast<uint64_t>(i + 1)]);

  PointCloud tar;
  tar.points.resize(n);
  std::vector<int> match_of_tar(n, -1);
  for (int slot = 0; slot < n; ++slot) {
    tar.points[perm[slot]] = tar_points[slot];
    match_of_tar[perm[slot]] = tar_match_src[slot];
  }

  // ray-order both frames and remap correspondences
  const std::vector<int> src_order = ray_length_order(src);
  const std::vector<int> tar_order = ray_length_order(tar);
  std::vector<int> src_pos(n), tar_pos(n);
  for (int k = 0; k < n; ++k) {
    src_pos[src_order[k]] = k;
    tar_pos[tar_order[k]] = k;
  }

  ScenePair out;
  out.src = order_by_ray_length(src);
  out.tar = order_by_ray_length(tar);
  out.gt = gt;
  for (int j = 0; j < n; ++j)
    if (match_of_tar[j] >= 0)
      out.gt_correspondences.emplace_back(src_pos[match_of_tar[j]], tar_pos[j]);
  std::sort(out.gt_correspondences.begin(), out.gt_correspondences.end());
  out.overlap_ratio = config.overlap;
  out.outlier_ratio = config.outlier;
  out.noise_sigma = config.noise_sigma;
  out.seed = seed;
  out.check();
  return out;
}

std::vector<int> compute_provenance(const Eigen::MatrixXd& pre, const Eigen::MatrixXd& post) {
  if (pre.cols() != post.cols()) throw UsageError("compute_provenance: feature dims disagree");
  const int n = static_cast<int>(pre.rows());
  std::vector<int> out(post.rows());
  Eigen::VectorXd pre_norm(n);
  for (int i = 0; i < n; ++i) pre_norm(i) = pre.row(i).norm();
  for (int r = 0; r < post.rows(); ++r) {
    const double pn = post.row(r).norm();
    int best = 0;
    double best_cos = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      const double denom = pre_norm(i) * pn;
      const double c = denom < 1e-300 ? 0.0 : post.row(r).dot(pre.row(i)) / denom;
      if (c > best_cos) {
        best_cos = c;
        best = i;
      }
    }
    out[r] = best;
  }
  return out;
}

MatchList derive_correspondences(const PointCloud& src, const PointCloud& tar,
                                 const RigidTransform& gt, double noise_sigma) {
  const double bound = 3.0 * noise_sigma + 1e-9;
  const int ns = src.size(), nt = tar.size();
  std::vector<Vec3> mapped(ns);
  for (int i = 0; i < ns; ++i) mapped[i] = apply_transform(gt, src.points[i]);

  std::vector<int> best_for_tar(nt, -1);
  std::vector<double> best_d(nt, std::numeric_limits<double>::infinity());
  for (int j = 0; j < nt; ++j)
    for (int i = 0; i < ns; ++i) {
      const double d = (mapped[i] - tar.points[j]).norm();
      if (d < best_d[j]) {
        best_d[j] = d;
        best_for_tar[j] = i;
      }
    }
  std::vector<int> best_for_src(ns, -1);
  std::vector<double> best_ds(ns, std::numeric_limits<double>::infinity());
  for (int i = 0; i < ns; ++i)
    for (int j = 0; j < nt; ++j) {
      const double d = (mapped[i] - tar.points[j]).norm();
      if (d < best_ds[i]) {
        best_ds[i] = d;
        best_for_src[i] = j;
      }
    }

  MatchList out;
  for (int j = 0; j < nt; ++j) {
    const int i = best_for_tar[j];
    if (i >= 0 && best_d[j] <= bound && best_for_src[i] == j) out.emplace_back(i, j);
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

std::string pair_name(int id, const char* which) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "pair_%04d_%s.ply", id, which);
  return buf;
}

}  // namespace

void save_dataset(const std::string& dir, const std::vector<ScenePair>& pairs) {
  fs::create_directories(dir);
  std::ofstream manifest(fs::path(dir) / "manifest.txt");
  if (!manifest) throw UsageError("cannot write manifest in " + dir);
  char buf[512];
  for (size_t id = 0; id < pairs.size(); ++id) {
    const ScenePair& p = pairs[id];
    write_ply((fs::path(dir) / pair_name(static_cast<int>(id), "src")).string(), p.src);
    write_ply((fs::path(dir) / pair_name(static_cast<int>(id), "tar")).string(), p.tar);
    const Quaternion& q = p.gt.rotation;
    const Vec3& t = p.gt.translation;
    std::snprintf(buf, sizeof(buf),
                  "%zu %.17g %.17g %.17g %.17g %.17g %.17g %.17g %d %.17g %.17g %.17g %llu\n", id,
                  q.w(), q.x(), q.y(), q.z(), t.x(), t.y(), t.z(), p.src.size(), p.overlap_ratio,
                  p.outlier_ratio, p.noise_sigma, static_cast<unsigned long long>(p.seed));
    manifest << buf;
  }
  if (!manifest) throw UsageError("failed writing manifest in " + dir);
}

std::vector<ScenePair> load_dataset(const std::string& dir) {
  std::ifstream manifest(fs::path(dir) / "manifest.txt");
  if (!manifest) throw UsageError("cannot open manifest in " + dir);

  std::vector<ScenePair> pairs;
  std::string line;
  int lineno = 0;
  while (std::getline(manifest, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    size_t id;
    double qw, qx, qy, qz, tx, ty, tz, overlap, outlier, sigma;
    int num_points;
    unsigned long long seed;
    if (!(ss >> id >> qw >> qx >> qy >> qz >> tx >> ty >> tz >> num_points >> overlap >> outlier >>
          sigma >> seed))
      throw UsageError(dir + "/manifest.txt:" + std::to_string(lineno) + ": malformed record");
    std::string extra;
    if (ss >> extra)
      throw UsageError(dir + "/manifest.txt:" + std::to_string(lineno) + ": trailing tokens");

    ScenePair p;
    p.src = read_ply((fs::path(dir) / pair_name(static_cast<int>(id), "src")).string());
    p.tar = read_ply((fs::path(dir) / pair_name(static_cast<int>(id), "tar")).string());
    p.gt.rotation = Quaternion(qw, qx, qy, qz);
    p.gt.translation = Vec3(tx, ty, tz);
    p.overlap_ratio = overlap;
    p.outlier_ratio = outlier;
    p.noise_sigma = sigma;
    p.seed = seed;
    if (p.src.size() != num_points)
      throw UsageError(dir + "/manifest.txt:" + std::to_string(lineno) +
                       ": point count does not match the PLY file");
    p.gt_correspondences = derive_correspondences(p.src, p.tar, p.gt, sigma);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace eqgs
