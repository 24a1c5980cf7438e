#pragma once

#include <string>
#include <vector>

#include "eqgs/nn.hpp"
#include "eqgs/objective.hpp"

namespace eqgs {

struct SceneConfig {
  int num_points{1024};
  double overlap{0.8};        // fraction of points with a correspondence
  double outlier{0.1};        // fraction of free-space target points
  double noise_sigma{0.005};  // per-point Gaussian noise, truncated at 3 sigma
  double max_angle_deg{45.0};
  double max_translation{0.3};  // gt translation uniform in this ball

  void validate() const;
};

// A synthetic frame pair with exact ground truth. Both clouds are ray-ordered.
struct ScenePair {
  PointCloud src;
  PointCloud tar;
  RigidTransform gt;
  MatchList gt_correspondences;
  double overlap_ratio{1.0};
  double outlier_ratio{0.0};
  double noise_sigma{0.0};
  uint64_t seed{0};

  void check() const;  // every match within 3*sigma + 1e-9 under gt
};

// Points sampled on 3-6 random planar/quadric primitives; target is the
// gt-transformed overlap subset plus fresh surface/free-space points, with
// truncated Gaussian noise. Deterministic per seed.
ScenePair generate_scene_pair(const SceneConfig& config, uint64_t seed);

// For each post-LRFT row, the pre-LRFT row of maximal cosine similarity
// (ties to the lowest index).
std::vector<int> compute_provenance(const Eigen::MatrixXd& pre, const Eigen::MatrixXd& post);

// Directory of PLY pairs plus a plain-text manifest, one record per line:
// id qw qx qy qz tx ty tz num_points overlap outlier noise_sigma seed
// (floats printed with 17 significant digits). Loading recomputes the
// correspondences from gt.
void save_dataset(const std::string& dir, const std::vector<ScenePair>& pairs);
std::vector<ScenePair> load_dataset(const std::string& dir);

// Mutual-nearest pairing under gt within 3*sigma + 1e-9.
MatchList derive_correspondences(const PointCloud& src, const PointCloud& tar,
                                 const RigidTransform& gt, double noise_sigma);

}  // namespace eqgs
