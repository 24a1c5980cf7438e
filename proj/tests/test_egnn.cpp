#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "eqgs/egnn.hpp"

using namespace eqgs;
using nn::Mat;

namespace {

PointCloud random_cloud(nn::Rng& rng, int n) {
  PointCloud pc;
  for (int i = 0; i < n; ++i)
    pc.points.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  return pc;
}

FeatureGraph random_graph(nn::Rng& rng, int n, int k) {
  const PointCloud pc = random_cloud(rng, n);
  FeatureGraph g;
  g.coord_embeddings = pc.coords_matrix();
  g.node_features =
      Mat::NullaryExpr(n, kNodeDim, [&](Eigen::Index, Eigen::Index) { return rng.normal(0, 1); });
  g.neighbors = build_knn(pc, k);
  return g;
}

RigidTransform random_se3(nn::Rng& rng) {
  Vec3 axis(rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1));
  axis.normalize();
  RigidTransform t;
  t.rotation = Quaternion(Eigen::AngleAxisd(rng.uniform(0, 3.0), axis));
  t.translation = Vec3(rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1));
  return t;
}

void check_orthonormal(const LocalFrame& f) {
  CHECK(std::abs(f.a.norm() - 1.0) < 1e-6);
  CHECK(std::abs(f.b.norm() - 1.0) < 1e-6);
  CHECK(std::abs(f.c.norm() - 1.0) < 1e-6);
  CHECK(std::abs(f.a.dot(f.b)) < 1e-6);
  CHECK(std::abs(f.b.dot(f.c)) < 1e-6);
  CHECK((f.a.cross(f.b) - f.c).norm() < 1e-6);  // right-handed
}

}  // namespace

TEST_CASE("build_local_frame on the worked example") {
  const LocalFrame f = build_local_frame(Vec3(1, 0, 0), Vec3(0, 1, 0));
  const double s = 1.0 / std::sqrt(2.0);
  CHECK((f.a - Vec3(s, -s, 0)).norm() < 1e-12);
  CHECK((f.b - Vec3(0, 0, 1)).norm() < 1e-12);
  CHECK((f.c - Vec3(-s, -s, 0)).norm() < 1e-12);
  check_orthonormal(f);
}

TEST_CASE("build_local_frame degenerate fallback stays orthonormal") {
  const LocalFrame f = build_local_frame(Vec3(1, 0, 0), Vec3(2, 0, 0));
  check_orthonormal(f);
  CHECK_THROWS_AS(build_local_frame(Vec3(1, 1, 1), Vec3(1, 1, 1)), NumericError);
}

TEST_CASE("build_local_frame rotates with the input pair") {
  nn::Rng rng(31);
  for (int t = 0; t < 50; ++t) {
    const Vec3 xi(rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1));
    const Vec3 xk(rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1));
    if (xi.cross(xk).norm() < 1e-6) continue;
    const Mat3 R = quat_to_matrix(
        Quaternion(Eigen::AngleAxisd(rng.uniform(0, 3.0),
                                     Vec3(rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1))
                                         .normalized())));
    const LocalFrame f = build_local_frame(xi, xk);
    const LocalFrame g = build_local_frame(R * xi, R * xk);
    CHECK((g.a - R * f.a).norm() < 1e-9);
    CHECK((g.b - R * f.b).norm() < 1e-9);
    CHECK((g.c - R * f.c).norm() < 1e-9);
  }
}

TEST_CASE("compute_message uses the square-root distance feature and is invariant") {
  nn::ParameterStore store;
  nn::Rng rng(32);
  const EgnnLayer layer = make_egnn_layer(store, rng, "l");

  Eigen::VectorXd h = Eigen::VectorXd::Zero(32);
  // |dx| = 4 -> distance feature 2: identical messages for any pair 4 apart
  const EdgeMessage m1 = compute_message(h, h, Vec3(0, 0, 0), Vec3(4, 0, 0), layer);
  const EdgeMessage m2 = compute_message(h, h, Vec3(1, 1, 1), Vec3(1, 5, 1), layer);
  CHECK((m1.raw - m2.raw).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((m1.coeffs - m2.coeffs).cwiseAbs().maxCoeff() < 1e-12);

  // invariance under a global rotation
  Eigen::VectorXd hi(32), hk(32);
  for (int i = 0; i < 32; ++i) {
    hi(i) = rng.normal(0, 1);
    hk(i) = rng.normal(0, 1);
  }
  const Vec3 xi(0.3, -0.2, 0.5), xk(-0.1, 0.4, 0.2);
  const Mat3 R = quat_to_matrix(Quaternion(Eigen::AngleAxisd(1.1, Vec3(0, 1, 1).normalized())));
  const EdgeMessage a = compute_message(hi, hk, xi, xk, layer);
  const EdgeMessage b = compute_message(hi, hk, R * xi, R * xk, layer);
  CHECK((a.raw - b.raw).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((a.coeffs - b.coeffs).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("update_coordinates: zero coefficients keep coordinates") {
  nn::Rng rng(33);
  FeatureGraph g = random_graph(rng, 12, 3);
  const EdgeList edges = flatten_edges(g.neighbors);
  EdgeMessages msgs;
  msgs.raw = Mat::Zero(edges.edge_count(), 9);
  msgs.coeffs = Mat::Zero(edges.edge_count(), 3);
  const auto frames = build_edge_frames(g.coord_embeddings, edges);
  const Mat out = update_coordinates(g, msgs, frames);
  CHECK((out - g.coord_embeddings).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("update_coordinates: single edge moves along the frame a-axis") {
  FeatureGraph g;
  g.coord_embeddings = Mat(2, 3);
  g.coord_embeddings << 0.5, 0.1, -0.2, -0.3, 0.4, 0.6;
  g.node_features = Mat::Zero(2, 32);
  g.neighbors.neighbors = {{1}, {0}};
  const EdgeList edges = flatten_edges(g.neighbors);
  const auto frames = build_edge_frames(g.coord_embeddings, edges);

  EdgeMessages msgs;
  msgs.raw = Mat::Zero(2, 9);
  msgs.coeffs = Mat::Zero(2, 3);
  msgs.coeffs(0, 0) = 1.0;  // edge 1->0 only, coefficient on a

  const double dist = (g.coord_embeddings.row(1) - g.coord_embeddings.row(0)).norm();
  const Vec3 expected =
      g.coord_embeddings.row(0).transpose() + std::exp(-dist) * frames[0].a;  // C = 1/1
  const Mat out = update_coordinates(g, msgs, frames);
  CHECK((out.row(0).transpose() - expected).norm() < 1e-12);
  CHECK((out.row(1) - g.coord_embeddings.row(1)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("update_hidden: permuting neighbor order is bit-identical") {
  nn::ParameterStore store;
  nn::Rng rng(34);
  const EgnnLayer layer = make_egnn_layer(store, rng, "l");
  FeatureGraph g = random_graph(rng, 10, 4);
  const EdgeList edges = flatten_edges(g.neighbors);
  const EdgeMessages msgs =
      compute_messages(g.node_features, g.coord_embeddings, edges, layer);
  const Mat h1 = update_hidden(g, msgs, layer);

  // permute each node's neighbor list; messages permute with the edges
  FeatureGraph g2 = g;
  for (auto& lst : g2.neighbors.neighbors) std::reverse(lst.begin(), lst.end());
  const EdgeList edges2 = flatten_edges(g2.neighbors);
  const EdgeMessages msgs2 =
      compute_messages(g2.node_features, g2.coord_embeddings, edges2, layer);
  const Mat h2 = update_hidden(g2, msgs2, layer);
  CHECK((h1 - h2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("run_egnn_stack: zero layers is the identity") {
  nn::Rng rng(35);
  const FeatureGraph g = random_graph(rng, 8, 3);
  const FeatureGraph out = run_egnn_stack(g, {});
  CHECK((out.node_features - g.node_features).cwiseAbs().maxCoeff() == 0.0);
  CHECK((out.coord_embeddings - g.coord_embeddings).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("run_egnn_stack: zeroed phi_x output layer freezes coordinates") {
  nn::ParameterStore store;
  nn::Rng rng(36);
  std::vector<EgnnLayer> layers = {make_egnn_layer(store, rng, "l0")};
  layers[0].phi_x.layers.back().weight->value.setZero();
  layers[0].phi_x.layers.back().bias->value.setZero();

  const FeatureGraph g = random_graph(rng, 10, 3);
  const FeatureGraph out = run_egnn_stack(g, layers);
  CHECK((out.coord_embeddings - g.coord_embeddings).cwiseAbs().maxCoeff() == 0.0);
  CHECK((out.node_features - g.node_features).cwiseAbs().maxCoeff() > 1e-9);
}

TEST_CASE("full-stack SE(3) equivariance and hidden invariance") {
  nn::Rng rng(37);
  for (int trial = 0; trial < 10; ++trial) {
    nn::ParameterStore store;
    auto layers = make_egnn_stack(store, rng, 4);
    const FeatureGraph g = random_graph(rng, 16, 4);
    const RigidTransform t = random_se3(rng);
    const Mat3 R = quat_to_matrix(t.rotation);

    FeatureGraph moved = g;
    moved.coord_embeddings =
        (g.coord_embeddings * R.transpose()).rowwise() + t.translation.transpose();

    const FeatureGraph a = run_egnn_stack(g, layers);
    const FeatureGraph b = run_egnn_stack(moved, layers);

    const Mat expect = (a.coord_embeddings * R.transpose()).rowwise() + t.translation.transpose();
    CHECK((b.coord_embeddings - expect).cwiseAbs().maxCoeff() <
          1e-5 * std::max(1.0, expect.cwiseAbs().maxCoeff()));
    CHECK((b.node_features - a.node_features).cwiseAbs().maxCoeff() <
          1e-5 * std::max(1.0, a.node_features.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("tape forward equals the plain stack") {
  nn::ParameterStore store;
  nn::Rng rng(38);
  auto layers = make_egnn_stack(store, rng, 4);
  const FeatureGraph g = random_graph(rng, 20, 5);
  const EdgeList edges = flatten_edges(g.neighbors);

  const FeatureGraph plain = run_egnn_stack(g, layers);

  nn::Tape tape;
  auto [h, x] = egnn_forward(tape.constant(g.node_features), tape.constant(g.coord_embeddings),
                             edges, layers);
  CHECK((h.val() - plain.node_features).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((x.val() - plain.coord_embeddings).cwiseAbs().maxCoeff() < 1e-10);

  // mean coordinate embedding: plain vs tape vs naive loop
  FeatureGraph fin = plain;
  const Mat mean_plain = mean_coord_embedding(fin);
  const nn::Tensor mean_tape = mean_coord_embedding(x, edges);
  CHECK((mean_tape.val() - mean_plain).cwiseAbs().maxCoeff() < 1e-12);
  for (int i = 0; i < fin.coord_embeddings.rows(); ++i) {
    Vec3 acc = Vec3::Zero();
    for (int k : fin.neighbors.neighbors[i]) acc += fin.coord_embeddings.row(k).transpose();
    acc /= double(fin.neighbors.neighbors[i].size());
    CHECK((mean_plain.row(i).transpose() - acc).norm() < 1e-12);
  }
}

TEST_CASE("mean_coord_embedding simple cases") {
  FeatureGraph g;
  g.coord_embeddings = Mat(3, 3);
  g.coord_embeddings << 1, 0, 0, -1, 0, 0, 0.3, 0.4, 0.5;
  g.node_features = Mat::Zero(3, 32);
  g.neighbors.neighbors = {{1, 2}, {2}, {0, 1}};
  const Mat m = mean_coord_embedding(g);
  CHECK((m.row(0) - (g.coord_embeddings.row(1) + g.coord_embeddings.row(2)) / 2.0)
            .cwiseAbs()
            .maxCoeff() < 1e-15);
  CHECK((m.row(1) - g.coord_embeddings.row(2)).cwiseAbs().maxCoeff() == 0.0);
}
