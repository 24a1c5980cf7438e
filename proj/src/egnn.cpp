#include "eqgs/egnn.hpp"

#include <cmath>

namespace eqgs {

using nn::Mat;
using nn::Tensor;

namespace {

constexpr double kCoincidentTol = 1e-12;
constexpr double kDegenerateCross = 1e-9;
constexpr int kPhiMHidden = 64;
constexpr int kPhiXHidden = 32;
constexpr int kPhiHHidden = 64;

int smallest_component_axis(const Vec3& a) {
  int axis = 0;
  double best = std::abs(a.x());
  if (std::abs(a.y()) < best) {
    best = std::abs(a.y());
    axis = 1;
  }
  if (std::abs(a.z()) < best) axis = 2;
  return axis;
}

}  // namespace

EgnnLayer make_egnn_layer(nn::ParameterStore& store, nn::Rng& rng, const std::string& name) {
  EgnnLayer layer;
  layer.phi_m = nn::make_mlp_stack(store, rng, name + ".phi_m",
                                   {2 * kNodeDim + 1, kPhiMHidden, kMessageDim});
  layer.phi_x = nn::make_mlp_stack(store, rng, name + ".phi_x", {kMessageDim, kPhiXHidden, 3});
  layer.phi_h = nn::make_mlp_stack(store, rng, name + ".phi_h",
                                   {kNodeDim + kMessageDim, kPhiHHidden, kNodeDim});
  return layer;
}

std::vector<EgnnLayer> make_egnn_stack(nn::ParameterStore& store, nn::Rng& rng, int num_layers) {
  std::vector<EgnnLayer> layers;
  for (int l = 0; l < num_layers; ++l)
    layers.push_back(make_egnn_layer(store, rng, "egnn." + std::to_string(l)));
  return layers;
}

LocalFrame build_local_frame(const Vec3& xi, const Vec3& xk) {
  const Vec3 diff = xi - xk;
  const double dn = diff.norm();
  if (dn < kCoincidentTol) throw NumericError("build_local_frame: coincident points");
  LocalFrame f;
  f.a = diff / dn;
  const Vec3 cr = xi.cross(xk);
  const double cn = cr.norm();
  if (cn < kDegenerateCross) {
    Vec3 e = Vec3::Zero();
    e[smallest_component_axis(f.a)] = 1.0;
    f.b = f.a.cross(e).normalized();
  } else {
    f.b = cr / cn;
  }
  f.c = f.a.cross(f.b);
  return f;
}

EdgeMessage compute_message(const Eigen::VectorXd& hi, const Eigen::VectorXd& hk, const Vec3& xi,
                            const Vec3& xk, const EgnnLayer& layer, double distance_power) {
  if (hi.size() != kNodeDim || hk.size() != kNodeDim)
    throw UsageError("compute_message: hidden features must be 32-dim");
  Mat input(1, 2 * kNodeDim + 1);
  input.leftCols(kNodeDim) = hi.transpose();
  input.middleCols(kNodeDim, kNodeDim) = hk.transpose();
  input(0, 2 * kNodeDim) = std::pow((xk - xi).norm(), distance_power);
  EdgeMessage m;
  m.raw = layer.phi_m.forward(input).row(0).transpose();
  m.coeffs = layer.phi_x.forward(Mat(m.raw.transpose())).row(0).transpose();
  return m;
}

std::vector<LocalFrame> build_edge_frames(const Eigen::MatrixXd& coords, const EdgeList& edges) {
  const Eigen::RowVector3d center = coords.colwise().mean();
  std::vector<LocalFrame> frames;
  frames.reserve(edges.edge_count());
  for (int e = 0; e < edges.edge_count(); ++e) {
    const Vec3 xi = (coords.row(edges.target[e]) - center).transpose();
    const Vec3 xk = (coords.row(edges.source[e]) - center).transpose();
    frames.push_back(build_local_frame(xi, xk));
  }
  return frames;
}

EdgeMessages compute_messages(const Eigen::MatrixXd& h, const Eigen::MatrixXd& coords,
                              const EdgeList& edges, const EgnnLayer& layer,
                              double distance_power) {
  const int ec = edges.edge_count();
  Mat input(ec, 2 * kNodeDim + 1);
  for (int e = 0; e < ec; ++e) {
    input.row(e).leftCols(kNodeDim) = h.row(edges.target[e]);
    input.row(e).middleCols(kNodeDim, kNodeDim) = h.row(edges.source[e]);
    const double d = (coords.row(edges.source[e]) - coords.row(edges.target[e])).norm();
    input(e, 2 * kNodeDim) = std::pow(d, distance_power);
  }
  EdgeMessages msgs;
  msgs.raw = layer.phi_m.forward(input);
  msgs.coeffs = layer.phi_x.forward(msgs.raw);
  return msgs;
}

Eigen::MatrixXd update_coordinates(const FeatureGraph& g, const EdgeMessages& msgs,
                                   const std::vector<LocalFrame>& frames) {
  const EdgeList edges = flatten_edges(g.neighbors);
  if (static_cast<int>(frames.size()) != edges.edge_count() ||
      msgs.coeffs.rows() != edges.edge_count())
    throw UsageError("update_coordinates: one message and frame per edge required");

  Mat out = g.coord_embeddings;
  for (int e = 0; e < edges.edge_count(); ++e) {
    const int i = edges.target[e];
    const double dist =
        (g.coord_embeddings.row(edges.source[e]) - g.coord_embeddings.row(i)).norm();
    const double w = std::exp(-dist);
    const Vec3 dir = msgs.coeffs(e, 0) * frames[e].a + msgs.coeffs(e, 1) * frames[e].b +
                     msgs.coeffs(e, 2) * frames[e].c;
    out.row(i) += edges.inv_degree[i] * w * dir.transpose();
  }
  if (!out.allFinite()) throw NumericError("update_coordinates produced non-finite values");
  return out;
}

Eigen::MatrixXd update_hidden(const FeatureGraph& g, const EdgeMessages& msgs,
                              const EgnnLayer& layer) {
  const EdgeList edges = flatten_edges(g.neighbors);
  if (msgs.raw.rows() != edges.edge_count())
    throw UsageError("update_hidden: one message per edge required");
  const int n = g.node_features.rows();
  // degree-normalized message aggregation; an unnormalized sum scales the
  // hidden features by ~|N(i)| per layer and training cannot recover
  Mat msum = Mat::Zero(n, kMessageDim);
  for (int e = 0; e < edges.edge_count(); ++e) msum.row(edges.target[e]) += msgs.raw.row(e);
  for (int i = 0; i < n; ++i) msum.row(i) *= edges.inv_degree[i];
  Mat input(n, kNodeDim + kMessageDim);
  input << g.node_features, msum;
  return layer.phi_h.forward(input);
}

FeatureGraph run_egnn_stack(const FeatureGraph& g, const std::vector<EgnnLayer>& layers,
                            double distance_power) {
  FeatureGraph cur = g;
  for (const auto& layer : layers) {
    const EdgeMessages msgs =
        compute_messages(cur.node_features, cur.coord_embeddings, flatten_edges(cur.neighbors),
                         layer, distance_power);
    const auto frames = build_edge_frames(cur.coord_embeddings, flatten_edges(cur.neighbors));
    Mat new_coords = update_coordinates(cur, msgs, frames);
    Mat new_hidden = update_hidden(cur, msgs, layer);
    cur.coord_embeddings = std::move(new_coords);
    cur.node_features = std::move(new_hidden);
  }
  return cur;
}

Eigen::MatrixXd mean_coord_embedding(const FeatureGraph& g) {
  const int n = g.coord_embeddings.rows();
  Mat out = Mat::Zero(n, 3);
  for (int i = 0; i < n; ++i) {
    const auto& lst = g.neighbors.neighbors[i];
    if (lst.empty()) throw UsageError("mean_coord_embedding: node has no neighbors");
    for (int k : lst) out.row(i) += g.coord_embeddings.row(k);
    out.row(i) /= static_cast<double>(lst.size());
  }
  return out;
}

namespace {

// One equivariant layer on tape. Frames are recomputed from the current
// (centered) embeddings; degenerate-cross edges take the deterministic
// fallback axis, chosen at forward time.
std::pair<Tensor, Tensor> egnn_layer_forward(Tensor h, Tensor x, const EdgeList& edges,
                                             const EgnnLayer& layer, double distance_power,
                                             Tensor inv_deg, Tensor mean_weights) {
  nn::Tape& tape = *h.tape;
  const int n = x.rows();
  const int ec = edges.edge_count();

  Tensor xi = gather_rows(x, edges.target);
  Tensor xk = gather_rows(x, edges.source);
  Tensor dx = xk - xi;
  Tensor dist = row_l2_norm(dx, 1e-300);
  for (int e = 0; e < ec; ++e)
    if (dist.val()(e, 0) < kCoincidentTol)
      throw NumericError("egnn_forward: coincident coordinate embeddings on an edge");

  Tensor hi = gather_rows(h, edges.target);
  Tensor hk = gather_rows(h, edges.source);
  Tensor dist_feat = pow_t(dist, distance_power);
  Tensor raw = layer.phi_m.forward(concat_cols(concat_cols(hi, hk), dist_feat));
  Tensor coeffs = layer.phi_x.forward(raw);

  // frames on centered coordinates
  Tensor neg_center = -1.0 * matmul(mean_weights, x);  // 1x3
  Tensor xci = add_row_vec(xi, neg_center);
  Tensor xck = add_row_vec(xk, neg_center);
  Tensor a = div_col_vec(-1.0 * dx, dist);  // (xi-xk)/|xi-xk|; centering cancels
  Tensor cr = cross3(xci, xck);

  Tensor b;
  {
    const Mat& crv = cr.val();
    std::vector<int> degenerate;
    for (int e = 0; e < ec; ++e)
      if (crv.row(e).norm() < kDegenerateCross) degenerate.push_back(e);
    if (degenerate.empty()) {
      b = row_l2_normalize(cr, kDegenerateCross);
    } else {
      Mat fallback_axis = Mat::Zero(ec, 3);
      Mat mask = Mat::Zero(ec, 1);
      const Mat& av = a.val();
      for (int e : degenerate) {
        fallback_axis(e, smallest_component_axis(Vec3(av.row(e)))) = 1.0;
        mask(e, 0) = 1.0;
      }
      Tensor fb = row_l2_normalize(cross3(a, tape.constant(fallback_axis)), 1e-30);
      Tensor keep = tape.constant(Mat::Ones(ec, 1) - mask);
      Tensor take = tape.constant(mask);
      b = mul_col_vec(row_l2_normalize(cr, kDegenerateCross), keep) + mul_col_vec(fb, take);
    }
  }
  Tensor c = cross3(a, b);

  Tensor w = exp_t(-dist);
  Tensor dir = mul_col_vec(a, slice_cols(coeffs, 0, 1)) +
               mul_col_vec(b, slice_cols(coeffs, 1, 1)) +
               mul_col_vec(c, slice_cols(coeffs, 2, 1));
  Tensor agg = mul_col_vec(scatter_sum_rows(mul_col_vec(dir, w), edges.target, n), inv_deg);
  Tensor x_next = x + agg;

  Tensor msum = mul_col_vec(scatter_sum_rows(raw, edges.target, n), inv_deg);
  Tensor h_next = layer.phi_h.forward(concat_cols(h, msum));
  return {h_next, x_next};
}

}  // namespace

std::pair<Tensor, Tensor> egnn_forward(Tensor h, Tensor x, const EdgeList& edges,
                                       const std::vector<EgnnLayer>& layers,
                                       double distance_power) {
  nn::Tape& tape = *h.tape;
  const int n = x.rows();
  Eigen::Map<const Eigen::VectorXd> inv(edges.inv_degree.data(), n);
  Tensor inv_deg = tape.constant(inv);
  Tensor mean_weights = tape.constant(Mat::Constant(1, n, 1.0 / n));
  for (const auto& layer : layers)
    std::tie(h, x) = egnn_layer_forward(h, x, edges, layer, distance_power, inv_deg, mean_weights);
  return {h, x};
}

Tensor mean_coord_embedding(Tensor x, const EdgeList& edges) {
  const int n = x.rows();
  Eigen::Map<const Eigen::VectorXd> inv(edges.inv_degree.data(), n);
  Tensor inv_deg = x.tape->constant(inv);
  Tensor gathered = gather_rows(x, edges.source);
  return mul_col_vec(scatter_sum_rows(gathered, edges.target, n), inv_deg);
}

}  // namespace eqgs
