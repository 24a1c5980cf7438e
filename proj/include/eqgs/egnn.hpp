#pragma once

#include "eqgs/graph.hpp"
#include "eqgs/nn.hpp"

namespace eqgs {

// Orthonormal right-handed edge triad (c = a x b).
struct LocalFrame {
  Vec3 a, b, c;
};

// One edge's invariant message: 9 raw channels and the 3 frame coefficients.
struct EdgeMessage {
  Eigen::Matrix<double, 9, 1> raw;
  Vec3 coeffs;
};

// Batched per-edge messages in edge-flattening order.
struct EdgeMessages {
  Eigen::MatrixXd raw;     // E x 9
  Eigen::MatrixXd coeffs;  // E x 3
};

// phi_m: (32+32+1) -> 9, phi_x: 9 -> 3, phi_h: (32+9) -> 32.
struct EgnnLayer {
  nn::MlpStack phi_m;
  nn::MlpStack phi_x;
  nn::MlpStack phi_h;
};

constexpr int kNodeDim = 32;
constexpr int kMessageDim = 9;

EgnnLayer make_egnn_layer(nn::ParameterStore& store, nn::Rng& rng, const std::string& name);
std::vector<EgnnLayer> make_egnn_stack(nn::ParameterStore& store, nn::Rng& rng, int num_layers);

// a = (xi-xk)/|xi-xk|, b = (xi x xk)/|xi x xk|, c = a x b. A degenerate cross
// (|xi x xk| < 1e-9) falls back to b = normalize(a x e), e the unit axis of
// a's smallest-magnitude component. Errors when xi == xk within 1e-12.
LocalFrame build_local_frame(const Vec3& xi, const Vec3& xk);

EdgeMessage compute_message(const Eigen::VectorXd& hi, const Eigen::VectorXd& hk, const Vec3& xi,
                            const Vec3& xk, const EgnnLayer& layer, double distance_power = 0.5);

// Batched frames for every edge. Coordinates are centered on their column mean
// before the cross product so the triad is translation-invariant and rotates
// with the input.
std::vector<LocalFrame> build_edge_frames(const Eigen::MatrixXd& coords, const EdgeList& edges);

EdgeMessages compute_messages(const Eigen::MatrixXd& h, const Eigen::MatrixXd& coords,
                              const EdgeList& edges, const EgnnLayer& layer,
                              double distance_power = 0.5);

// x_i <- x_i + (1/|N(i)|) sum_k exp(-|x_k - x_i|) (c_a a + c_b b + c_c c).
Eigen::MatrixXd update_coordinates(const FeatureGraph& g, const EdgeMessages& msgs,
                                   const std::vector<LocalFrame>& frames);

// h_i <- phi_h(h_i, sum_k raw_ik).
Eigen::MatrixXd update_hidden(const FeatureGraph& g, const EdgeMessages& msgs,
                              const EgnnLayer& layer);

FeatureGraph run_egnn_stack(const FeatureGraph& g, const std::vector<EgnnLayer>& layers,
                            double distance_power = 0.5);

// Per node, mean of neighbor coordinate embeddings.
Eigen::MatrixXd mean_coord_embedding(const FeatureGraph& g);

// Tape twins used by training.
std::pair<nn::Tensor, nn::Tensor> egnn_forward(nn::Tensor h, nn::Tensor x, const EdgeList& edges,
                                               const std::vector<EgnnLayer>& layers,
                                               double distance_power = 0.5);
nn::Tensor mean_coord_embedding(nn::Tensor x, const EdgeList& edges);

}  // namespace eqgs
