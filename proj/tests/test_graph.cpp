#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "eqgs/graph.hpp"
#include "eqgs/nn.hpp"

using namespace eqgs;

namespace {

PointCloud random_cloud(nn::Rng& rng, int n, double span = 1.0) {
  PointCloud pc;
  for (int i = 0; i < n; ++i)
    pc.points.emplace_back(rng.uniform(-span, span), rng.uniform(-span, span),
                           rng.uniform(-span, span));
  return pc;
}

// exhaustive reference: all in-radius neighbors, nearest-first, ties by index
std::vector<int> brute_ball(const PointCloud& pc, int i, double radius, int cap) {
  std::vector<std::pair<double, int>> cand;
  for (int j = 0; j < pc.size(); ++j) {
    if (j == i) continue;
    const double d = (pc.points[j] - pc.points[i]).squaredNorm();
    if (d <= radius * radius) cand.emplace_back(d, j);
  }
  std::sort(cand.begin(), cand.end());
  std::vector<int> out;
  for (int t = 0; t < std::min<int>(cap, cand.size()); ++t) out.push_back(cand[t].second);
  return out;
}

}  // namespace

TEST_CASE("ball query lists close points and falls back when isolated") {
  PointCloud close;
  close.points = {Vec3(0, 0, 0), Vec3(0.1, 0, 0)};
  auto nbrs = build_ball_query(close, 0.3, 16);
  CHECK(nbrs.neighbors[0] == std::vector<int>{1});
  CHECK(nbrs.neighbors[1] == std::vector<int>{0});

  PointCloud far;
  far.points = {Vec3(0, 0, 0), Vec3(1.0, 0, 0)};
  nbrs = build_ball_query(far, 0.3, 16);
  CHECK(nbrs.neighbors[0] == std::vector<int>{1});  // nearest-neighbor fallback
  CHECK(nbrs.neighbors[1] == std::vector<int>{0});
}

TEST_CASE("ball query matches the exhaustive scan on 1024 random points") {
  nn::Rng rng(21);
  const PointCloud pc = random_cloud(rng, 1024);
  const auto nbrs = build_ball_query(pc, 0.3, 16);
  nbrs.check(pc.size(), 16);
  for (int i = 0; i < pc.size(); ++i) {
    auto expect = brute_ball(pc, i, 0.3, 16);
    if (expect.empty()) continue;  // fallback nodes checked separately
    CHECK(nbrs.neighbors[i] == expect);
  }
}

TEST_CASE("ball query rejects degenerate input") {
  PointCloud one;
  one.points.emplace_back(0, 0, 0);
  CHECK_THROWS_AS(build_ball_query(one, 0.3, 16), UsageError);
}

TEST_CASE("knn on collinear points and k = N-1") {
  PointCloud pc;
  pc.points = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(3, 0, 0)};
  auto nbrs = build_knn(pc, 1);
  CHECK(nbrs.neighbors[1] == std::vector<int>{0});  // nearer endpoint

  nbrs = build_knn(pc, 2);
  for (int i = 0; i < 3; ++i) CHECK(nbrs.neighbors[i].size() == 2);
}

TEST_CASE("knn matches brute force on 1024 random points") {
  nn::Rng rng(22);
  const PointCloud pc = random_cloud(rng, 1024);
  const auto nbrs = build_knn(pc, 16);
  for (int i = 0; i < pc.size(); ++i) {
    std::vector<std::pair<double, int>> cand;
    for (int j = 0; j < pc.size(); ++j)
      if (j != i) cand.emplace_back((pc.points[j] - pc.points[i]).squaredNorm(), j);
    std::sort(cand.begin(), cand.end());
    for (int t = 0; t < 16; ++t) CHECK(nbrs.neighbors[i][t] == cand[t].second);
  }
}

TEST_CASE("knn rejects k >= N") {
  nn::Rng rng(23);
  const PointCloud pc = random_cloud(rng, 8);
  CHECK_THROWS_AS(build_knn(pc, 8), UsageError);
}

TEST_CASE("neighbor lists are invariant under rigid motion") {
  nn::Rng rng(24);
  const PointCloud pc = random_cloud(rng, 256);
  RigidTransform t;
  t.rotation = Quaternion(Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()));
  t.translation = Vec3(0.4, -0.1, 0.2);
  const PointCloud moved = apply_transform(t, pc);

  const auto a = build_knn(pc, 8);
  const auto b = build_knn(moved, 8);
  int mismatches = 0;
  for (int i = 0; i < pc.size(); ++i)
    if (a.neighbors[i] != b.neighbors[i]) ++mismatches;
  // ties may permute under floating-point motion, but essentially all lists match
  CHECK(mismatches <= 2);
}

TEST_CASE("edge count stays within the N*n cap") {
  nn::Rng rng(25);
  const PointCloud pc = random_cloud(rng, 512, 0.5);
  const auto nbrs = build_ball_query(pc, 0.3, 16);
  CHECK(nbrs.edge_count() <= 512 * 16);
  const EdgeList edges = flatten_edges(nbrs);
  CHECK(edges.edge_count() == nbrs.edge_count());
}
