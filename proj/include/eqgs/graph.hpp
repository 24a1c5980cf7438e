#pragma once

#include <vector>

#include "eqgs/geometry.hpp"

namespace eqgs {

// Per-node neighbor indices, distance-ascending, ties by index. No self-loops.
struct NeighborList {
  std::vector<std::vector<int>> neighbors;

  int node_count() const { return static_cast<int>(neighbors.size()); }
  int edge_count() const;
  void check(int expected_nodes, int cap) const;
};

// Flat edge arrays derived from a NeighborList: edge e runs k -> i
// (neighbor source[e] feeds node target[e]). Used by the batched layers.
struct EdgeList {
  std::vector<int> target;          // node i per edge
  std::vector<int> source;          // neighbor k per edge
  std::vector<double> inv_degree;   // 1/|N(i)| per node

  int edge_count() const { return static_cast<int>(target.size()); }
};

EdgeList flatten_edges(const NeighborList& nbrs);

// Up to max_neighbors within `radius` per node (nearest-first). A node with an
// empty ball falls back to its single nearest neighbor.
NeighborList build_ball_query(const PointCloud& pc, double radius, int max_neighbors);

// k nearest neighbors per node. Requires k < point count.
NeighborList build_knn(const PointCloud& pc, int k);

// Node features (h), coordinate embeddings (x) and the fixed neighbor structure.
struct FeatureGraph {
  Eigen::MatrixXd node_features;     // N x 32
  Eigen::MatrixXd coord_embeddings;  // N x 3
  NeighborList neighbors;
};

}  // namespace eqgs
