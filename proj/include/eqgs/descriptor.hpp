#pragma once

#include <string>

#include "eqgs/graph.hpp"
#include "eqgs/nn.hpp"

namespace eqgs {

// Shallow per-point descriptor net: layer 0 consumes relative coordinates only
// (width 3), deeper layers consume (neighbor feature, relative coordinates)
// (width 32+3). Every layer aggregates by neighbor mean. Output dim is 32.
struct DescriptorStack {
  std::vector<nn::MlpLayer> layers;
};

constexpr int kDescriptorDim = 32;

DescriptorStack make_descriptor_stack(nn::ParameterStore& store, nn::Rng& rng, int num_layers);

// Plain forward; independent of the tape path.
Eigen::MatrixXd compute_descriptors(const PointCloud& pc, const NeighborList& nbrs,
                                    const DescriptorStack& stack);

// Tape forward used in training. `coords` is Nx3.
nn::Tensor compute_descriptors(nn::Tape& tape, nn::Tensor coords, const EdgeList& edges,
                               const DescriptorStack& stack);

// Descriptor sidecar: magic "EQDF", u32 count, u32 dim, f32 LE row-major.
void write_eqdf(const std::string& path, const Eigen::MatrixXd& descriptors);
Eigen::MatrixXd read_eqdf(const std::string& path);

// Attach external descriptors, bypassing the stack. Row count must equal the
// point count and the dim must be 32.
PointCloud ingest_descriptors(const PointCloud& pc, const std::string& path);

}  // namespace eqgs
