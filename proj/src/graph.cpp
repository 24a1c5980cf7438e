#include "eqgs/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace eqgs {

int NeighborList::edge_count() const {
  int e = 0;
  for (const auto& n : neighbors) e += static_cast<int>(n.size());
  return e;
}

void NeighborList::check(int expected_nodes, int cap) const {
  if (node_count() != expected_nodes) throw UsageError("neighbor list size mismatch");
  for (int i = 0; i < node_count(); ++i) {
    if (cap > 0 && static_cast<int>(neighbors[i].size()) > cap)
      throw UsageError("neighbor list exceeds cap");
    for (int k : neighbors[i]) {
      if (k == i) throw UsageError("neighbor list has a self-loop");
      if (k < 0 || k >= expected_nodes) throw UsageError("neighbor index out of range");
    }
  }
}

EdgeList flatten_edges(const NeighborList& nbrs) {
  EdgeList e;
  e.inv_degree.resize(nbrs.node_count());
  for (int i = 0; i < nbrs.node_count(); ++i) {
    const auto& lst = nbrs.neighbors[i];
    if (lst.empty()) throw UsageError("node has no neighbors");
    e.inv_degree[i] = 1.0 / static_cast<double>(lst.size());
    for (int k : lst) {
      e.target.push_back(i);
      e.source.push_back(k);
    }
  }
  return e;
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

CellKey cell_of(const Vec3& p, double cell) {
  return CellKey{static_cast<long long>(std::floor(p.x() / cell)),
                 static_cast<long long>(std::floor(p.y() / cell)),
                 static_cast<long long>(std::floor(p.z() / cell))};
}

int brute_nearest(const PointCloud& pc, int i) {
  double best = std::numeric_limits<double>::infinity();
  int best_j = -1;
  for (int j = 0; j < pc.size(); ++j) {
    if (j == i) continue;
    const double d = (pc.points[j] - pc.points[i]).squaredNorm();
    if (d < best || (d == best && j < best_j)) {
      best = d;
      best_j = j;
    }
  }
  return best_j;
}

}  // namespace

NeighborList build_ball_query(const PointCloud& pc, double radius, int max_neighbors) {
  pc.check();
  if (!(radius > 0.0)) throw UsageError("build_ball_query: radius must be > 0");
  if (max_neighbors < 1) throw UsageError("build_ball_query: max_neighbors must be >= 1");
  if (pc.size() < 2) throw UsageError("build_ball_query: need at least 2 points");

  // Hash grid with cell size = radius: candidates live in the 27 cells around a query.
  std::unordered_map<CellKey, std::vector<int>, CellKeyHash> grid;
  for (int i = 0; i < pc.size(); ++i) grid[cell_of(pc.points[i], radius)].push_back(i);

  const double r2 = radius * radius;
  NeighborList out;
  out.neighbors.resize(pc.size());
  std::vector<std::pair<double, int>> cand;
  for (int i = 0; i < pc.size(); ++i) {
    cand.clear();
    const CellKey c = cell_of(pc.points[i], radius);
    for (long long dx = -1; dx <= 1; ++dx)
      for (long long dy = -1; dy <= 1; ++dy)
        for (long long dz = -1; dz <= 1; ++dz) {
          auto it = grid.find(CellKey{c.x + dx, c.y + dy, c.z + dz});
          if (it == grid.end()) continue;
          for (int j : it->second) {
            if (j == i) continue;
            const double d = (pc.points[j] - pc.points[i]).squaredNorm();
            if (d <= r2) cand.emplace_back(d, j);
          }
        }
    if (cand.empty()) {
      out.neighbors[i].push_back(brute_nearest(pc, i));
      continue;
    }
    std::sort(cand.begin(), cand.end());
    const int take = std::min<int>(max_neighbors, static_cast<int>(cand.size()));
    for (int t = 0; t < take; ++t) out.neighbors[i].push_back(cand[t].second);
  }
  return out;
}

NeighborList build_knn(const PointCloud& pc, int k) {
  pc.check();
  if (k < 1) throw UsageError("build_knn: k must be >= 1");
  if (k >= pc.size()) throw UsageError("build_knn: k must be < point count");

  NeighborList out;
  out.neighbors.resize(pc.size());
  std::vector<std::pair<double, int>> cand(pc.size() - 1);
  for (int i = 0; i < pc.size(); ++i) {
    int m = 0;
    for (int j = 0; j < pc.size(); ++j) {
      if (j == i) continue;
      cand[m++] = {(pc.points[j] - pc.points[i]).squaredNorm(), j};
    }
    std::nth_element(cand.begin(), cand.begin() + (k - 1), cand.end());
    std::sort(cand.begin(), cand.begin() + k);
    out.neighbors[i].reserve(k);
    for (int t = 0; t < k; ++t) out.neighbors[i].push_back(cand[t].second);
  }
  return out;
}

}  // namespace eqgs
