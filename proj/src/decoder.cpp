#include "eqgs/decoder.hpp"

#include <cmath>

namespace eqgs {

using nn::Mat;
using nn::Tensor;

namespace {

constexpr double kQuatNormFloor = 1e-8;

std::vector<int> valid_indices(int n, const std::vector<bool>& valid) {
  std::vector<int> idx;
  if (valid.empty()) {
    idx.resize(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    return idx;
  }
  if (static_cast<int>(valid.size()) != n) throw UsageError("decode_pose: mask length mismatch");
  for (int i = 0; i < n; ++i)
    if (valid[i]) idx.push_back(i);
  return idx;
}

RigidTransform transform_from_raw(const Eigen::Vector4d& q_raw, const Vec3& t) {
  const double norm = q_raw.norm();
  if (norm < kQuatNormFloor) throw NumericError("decode_pose: quaternion norm underflow");
  Eigen::Vector4d q = q_raw / norm;
  if (q(0) < 0.0) q = -q;  // canonical double-cover representative
  RigidTransform out;
  out.rotation = Quaternion(q(0), q(1), q(2), q(3));
  out.translation = t;
  return out;
}

}  // namespace

DecoderHead make_decoder_head(nn::ParameterStore& store, nn::Rng& rng) {
  DecoderHead head;
  head.fc = nn::make_mlp_stack(store, rng, "dec", {2 * 35, 256, 64, 7});
  // output layer starts at the identity pose; regression learns the residual
  head.fc.layers.back().weight->value.setZero();
  head.fc.layers.back().bias->value << 1, 0, 0, 0, 0, 0, 0;
  return head;
}

RigidTransform decode_pose(const Eigen::MatrixXd& proj_src, const Eigen::MatrixXd& proj_tar,
                           const DecoderHead& head, const std::vector<bool>& valid,
                           PoolMode pool) {
  if (proj_src.rows() != proj_tar.rows() || proj_src.cols() != 35 || proj_tar.cols() != 35)
    throw UsageError("decode_pose: expected matching N'x35 inputs");
  const auto idx = valid_indices(static_cast<int>(proj_src.rows()), valid);
  if (idx.empty()) throw UnregistrableError("decode_pose: no valid similarity rows");

  Mat pooled(1, 70);
  if (pool == PoolMode::Mean) {
    pooled.setZero();
    for (int i : idx) {
      pooled.leftCols(35) += proj_src.row(i);
      pooled.rightCols(35) += proj_tar.row(i);
    }
    pooled /= static_cast<double>(idx.size());
  } else {
    pooled.setConstant(-std::numeric_limits<double>::infinity());
    for (int i : idx) {
      pooled.leftCols(35) = pooled.leftCols(35).cwiseMax(proj_src.row(i));
      pooled.rightCols(35) = pooled.rightCols(35).cwiseMax(proj_tar.row(i));
    }
  }

  const Mat out = head.fc.forward(pooled);
  return transform_from_raw(out.row(0).head<4>().transpose(), out.row(0).tail<3>().transpose());
}

PoseTensors decode_pose(nn::Tape& tape, Tensor proj_src, Tensor proj_tar, const DecoderHead& head,
                        const std::vector<bool>& valid, PoolMode pool) {
  if (proj_src.rows() != proj_tar.rows() || proj_src.cols() != 35 || proj_tar.cols() != 35)
    throw UsageError("decode_pose: expected matching N'x35 inputs");
  const auto idx = valid_indices(proj_src.rows(), valid);
  if (idx.empty()) throw UnregistrableError("decode_pose: no valid similarity rows");

  Tensor concat = concat_cols(proj_src, proj_tar);
  Tensor pooled;
  if (pool == PoolMode::Mean) {
    Mat weights = Mat::Zero(1, proj_src.rows());
    for (int i : idx) weights(0, i) = 1.0 / static_cast<double>(idx.size());
    pooled = matmul(tape.constant(weights), concat);
  } else {
    pooled = col_max(gather_rows(concat, idx));
  }

  Tensor out = head.fc.forward(pooled);
  Tensor q_raw = slice_cols(out, 0, 4);
  const double norm = q_raw.val().row(0).norm();
  if (norm < kQuatNormFloor) throw NumericError("decode_pose: quaternion norm underflow");

  PoseTensors pose;
  pose.quat = div_col_vec(q_raw, row_l2_norm(q_raw, kQuatNormFloor));
  pose.translation = slice_cols(out, 4, 3);
  return pose;
}

}  // namespace eqgs
