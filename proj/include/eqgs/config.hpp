#pragma once

#include <cstdint>
#include <string>

#include "eqgs/error.hpp"

namespace eqgs {

// All knobs of the pipeline. Defaults follow the reference setup: 1024 points,
// ball query (0.3 radius, 16 neighbors), 2 descriptor layers, 4 equivariant
// layers, 32-dim node features, LRFT 1024/35/128, beta 0.05, indoor thresholds.
struct Config {
  int num_points{1024};
  std::string neighbor_mode{"ball"};  // ball | knn
  double ball_radius{0.3};
  int k{16};
  int max_neighbors{16};
  int descriptor_layers{2};
  int egnn_layers{4};
  int node_dim{32};
  int lrft_n{1024};
  int lrft_r{35};
  int lrft_n_out{128};
  double beta{0.05};
  double distance_power{0.5};
  double lr{1e-3};
  int epochs{50};
  uint64_t seed{0};

  std::string profile{"indoor"};
  double te_thresh{0.30};
  double re_thresh_deg{15.0};
  double tau{0.10};
  double voxel{0.05};

  // synthetic scene generation
  double overlap{0.8};
  double outlier{0.1};
  double noise_sigma{0.005};
  double max_angle_deg{45.0};
  double max_translation{0.3};

  // exposed experimental knobs
  double lrft_init_std{-1.0};   // < 0 -> sqrt(lrft_r)
  double lrft_b_jitter{1e-6};   // symmetry-breaking noise on B at model build; 0 disables
  double reg_target{-1.0};      // < 0 -> lrft_r
  int min_rank{16};
  double det_tol{1e-6};
  std::string decoder_pool{"mean"};  // mean | max

  // Sets te/re/tau/voxel for a named profile (indoor or outdoor).
  void apply_profile(const std::string& name);
  // Assign one key; throws UsageError on unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  void validate() const;

  double effective_reg_target() const { return reg_target < 0.0 ? lrft_r : reg_target; }
  double effective_lrft_std() const;
};

// Flat `key = value` lines, '#' comments. Later keys override earlier ones.
Config load_config_file(const std::string& path, Config base = Config{});

}  // namespace eqgs
