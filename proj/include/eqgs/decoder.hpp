#pragma once

#include "eqgs/geometry.hpp"
#include "eqgs/nn.hpp"

namespace eqgs {

// Pose regression head: concat the two projected feature blocks, mean-pool
// over valid rows, FC 70 -> 256 -> 64 -> 7 (4 quaternion + 3 translation).
struct DecoderHead {
  nn::MlpStack fc;
};

enum class PoolMode { Mean, Max };

DecoderHead make_decoder_head(nn::ParameterStore& store, nn::Rng& rng);

// Plain forward. `valid` selects the rows pooled over (empty = all rows).
// Errors when no row is valid or the raw quaternion norm underflows (< 1e-8).
// The returned quaternion is canonicalized to w >= 0.
RigidTransform decode_pose(const Eigen::MatrixXd& proj_src, const Eigen::MatrixXd& proj_tar,
                           const DecoderHead& head, const std::vector<bool>& valid = {},
                           PoolMode pool = PoolMode::Mean);

// Tape forward: returns the normalized (not canonicalized) quaternion as 1x4
// and the translation as 1x3.
struct PoseTensors {
  nn::Tensor quat;
  nn::Tensor translation;
};

PoseTensors decode_pose(nn::Tape& tape, nn::Tensor proj_src, nn::Tensor proj_tar,
                        const DecoderHead& head, const std::vector<bool>& valid = {},
                        PoolMode pool = PoolMode::Mean);

}  // namespace eqgs
