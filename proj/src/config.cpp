#include "eqgs/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace eqgs {

void Config::apply_profile(const std::string& name) {
  if (name == "indoor") {
    te_thresh = 0.30;
    re_thresh_deg = 15.0;
    tau = 0.10;
    voxel = 0.05;
  } else if (name == "outdoor") {
    te_thresh = 0.60;
    re_thresh_deg = 5.0;
    tau = 0.60;
    voxel = 0.30;
  } else {
    throw UsageError("unknown profile '" + name + "' (expected indoor or outdoor)");
  }
  profile = name;
}

namespace {

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "': cannot parse number '" + value + "'");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const long v = std::stol(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "': cannot parse integer '" + value + "'");
  }
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "': cannot parse integer '" + value + "'");
  }
}

}  // namespace

void Config::set(const std::string& key, const std::string& value) {
  if (key == "num_points") num_points = parse_int(key, value);
  else if (key == "neighbor_mode") neighbor_mode = value;
  else if (key == "ball_radius") ball_radius = parse_double(key, value);
  else if (key == "k") k = parse_int(key, value);
  else if (key == "max_neighbors") max_neighbors = parse_int(key, value);
  else if (key == "descriptor_layers") descriptor_layers = parse_int(key, value);
  else if (key == "egnn_layers") egnn_layers = parse_int(key, value);
  else if (key == "node_dim") node_dim = parse_int(key, value);
  else if (key == "lrft_n") lrft_n = parse_int(key, value);
  else if (key == "lrft_r") lrft_r = parse_int(key, value);
  else if (key == "lrft_n_out") lrft_n_out = parse_int(key, value);
  else if (key == "beta") beta = parse_double(key, value);
  else if (key == "distance_power") distance_power = parse_double(key, value);
  else if (key == "lr") lr = parse_double(key, value);
  else if (key == "epochs") epochs = parse_int(key, value);
  else if (key == "seed") seed = parse_u64(key, value);
  else if (key == "profile") apply_profile(value);
  else if (key == "te_thresh") te_thresh = parse_double(key, value);
  else if (key == "re_thresh_deg") re_thresh_deg = parse_double(key, value);
  else if (key == "tau") tau = parse_double(key, value);
  else if (key == "voxel") voxel = parse_double(key, value);
  else if (key == "overlap") overlap = parse_double(key, value);
  else if (key == "outlier") outlier = parse_double(key, value);
  else if (key == "noise_sigma") noise_sigma = parse_double(key, value);
  else if (key == "max_angle_deg") max_angle_deg = parse_double(key, value);
  else if (key == "max_translation") max_translation = parse_double(key, value);
  else if (key == "lrft_init_std") lrft_init_std = parse_double(key, value);
  else if (key == "lrft_b_jitter") lrft_b_jitter = parse_double(key, value);
  else if (key == "reg_target") reg_target = parse_double(key, value);
  else if (key == "min_rank") min_rank = parse_int(key, value);
  else if (key == "det_tol") det_tol = parse_double(key, value);
  else if (key == "decoder_pool") decoder_pool = value;
  else throw UsageError("unknown config key '" + key + "'");
}

void Config::validate() const {
  if (num_points < 2) throw UsageError("config: num_points must be >= 2");
  if (neighbor_mode != "ball" && neighbor_mode != "knn")
    throw UsageError("config: neighbor_mode must be 'ball' or 'knn'");
  if (!(ball_radius > 0.0)) throw UsageError("config: ball_radius must be > 0");
  if (k < 1 || max_neighbors < 1) throw UsageError("config: neighbor counts must be >= 1");
  if (descriptor_layers < 1) throw UsageError("config: descriptor_layers must be >= 1");
  if (egnn_layers < 0) throw UsageError("config: egnn_layers must be >= 0");
  if (node_dim != 32) throw UsageError("config: node_dim is fixed at 32");
  if (lrft_r > std::min(lrft_n, lrft_n_out))
    throw UsageError("config: lrft_r must be <= min(lrft_n, lrft_n_out)");
  if (lrft_n != num_points) throw UsageError("config: lrft_n must equal num_points");
  if (lrft_n_out < 7)
    throw UsageError("config: lrft_n_out must be >= 7 (submatrix verification window)");
  if (beta < 0.0) throw UsageError("config: beta must be >= 0");
  if (lr <= 0.0) throw UsageError("config: lr must be > 0");
  if (epochs < 0) throw UsageError("config: epochs must be >= 0");
  if (decoder_pool != "mean" && decoder_pool != "max")
    throw UsageError("config: decoder_pool must be 'mean' or 'max'");
  if (min_rank < 1) throw UsageError("config: min_rank must be >= 1");
  if (!(det_tol > 0.0)) throw UsageError("config: det_tol must be > 0");
  if (voxel < 0.0) throw UsageError("config: voxel must be >= 0 (0 disables)");
}

double Config::effective_lrft_std() const {
  return lrft_init_std > 0.0 ? lrft_init_std : std::sqrt(static_cast<double>(lrft_r));
}

Config load_config_file(const std::string& path, Config base) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    try {
      base.set(key, value);
    } catch (const UsageError& e) {
      throw UsageError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

}  // namespace eqgs
