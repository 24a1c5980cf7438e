#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "eqgs/decoder.hpp"

using namespace eqgs;
using nn::Mat;

namespace {

Mat randn(nn::Rng& rng, int r, int c) {
  return Mat::NullaryExpr(r, c, [&](Eigen::Index, Eigen::Index) { return rng.normal(0, 1); });
}

}  // namespace

TEST_CASE("bias-only head decodes the identity transform") {
  nn::ParameterStore store;
  nn::Rng rng(61);
  DecoderHead head = make_decoder_head(store, rng);
  for (auto& layer : head.fc.layers) {
    layer.weight->value.setZero();
    layer.bias->value.setZero();
  }
  head.fc.layers.back().bias->value << 1, 0, 0, 0, 0, 0, 0;

  nn::Rng rng2(62);
  const Mat ps = randn(rng2, 8, 35), pt = randn(rng2, 8, 35);
  const RigidTransform t = decode_pose(ps, pt, head);
  CHECK(t.rotation.isApprox(Quaternion::Identity(), 1e-12));
  CHECK(t.translation.norm() == 0.0);
}

TEST_CASE("doubling the raw quaternion output changes nothing") {
  nn::ParameterStore store;
  nn::Rng rng(63);
  DecoderHead head = make_decoder_head(store, rng);
  // give the output layer nontrivial weights (it starts at the identity pose)
  head.fc.layers.back().weight->value =
      randn(rng, 7, 64) * 0.1;
  nn::Rng rng2(64);
  const Mat ps = randn(rng2, 8, 35), pt = randn(rng2, 8, 35);
  const RigidTransform a = decode_pose(ps, pt, head);

  // double the quaternion rows of the last layer: same normalized quaternion
  head.fc.layers.back().weight->value.topRows(4) *= 2.0;
  head.fc.layers.back().bias->value.leftCols(4) *= 2.0;
  const RigidTransform b = decode_pose(ps, pt, head);
  CHECK(a.rotation.isApprox(b.rotation, 1e-12));
  CHECK((a.translation - b.translation).norm() < 1e-12);
}

TEST_CASE("pooled vector equals the per-row mean oracle") {
  nn::ParameterStore store;
  nn::Rng rng(65);
  DecoderHead head = make_decoder_head(store, rng);
  const Mat ps = randn(rng, 6, 35), pt = randn(rng, 6, 35);
  std::vector<bool> valid = {true, false, true, true, false, true};

  Mat pooled = Mat::Zero(1, 70);
  int count = 0;
  for (int i = 0; i < 6; ++i) {
    if (!valid[i]) continue;
    pooled.leftCols(35) += ps.row(i);
    pooled.rightCols(35) += pt.row(i);
    ++count;
  }
  pooled /= count;
  const Mat expect = head.fc.forward(pooled);

  nn::Tape tape;
  const PoseTensors pose =
      decode_pose(tape, tape.constant(ps), tape.constant(pt), head, valid);
  Eigen::Vector4d q_expect = expect.row(0).head<4>();
  q_expect.normalize();
  CHECK((pose.quat.val().row(0).transpose() - q_expect).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((pose.translation.val().row(0) - expect.row(0).tail<3>()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("row permutation of valid rows leaves the pose unchanged") {
  nn::ParameterStore store;
  nn::Rng rng(66);
  DecoderHead head = make_decoder_head(store, rng);
  const Mat ps = randn(rng, 8, 35), pt = randn(rng, 8, 35);

  Mat ps2(8, 35), pt2(8, 35);
  for (int i = 0; i < 8; ++i) {
    ps2.row(i) = ps.row((i + 5) % 8);
    pt2.row(i) = pt.row((i + 5) % 8);
  }
  const RigidTransform a = decode_pose(ps, pt, head);
  const RigidTransform b = decode_pose(ps2, pt2, head);
  CHECK(a.rotation.isApprox(b.rotation, 1e-12));
  CHECK((a.translation - b.translation).norm() < 1e-12);
}

TEST_CASE("masked rows have zero influence") {
  nn::ParameterStore store;
  nn::Rng rng(67);
  DecoderHead head = make_decoder_head(store, rng);
  Mat ps = randn(rng, 8, 35), pt = randn(rng, 8, 35);
  std::vector<bool> valid(8, true);
  valid[3] = false;

  const RigidTransform a = decode_pose(ps, pt, head, valid);
  ps.row(3).setConstant(1234.0);
  pt.row(3).setConstant(-99.0);
  const RigidTransform b = decode_pose(ps, pt, head, valid);
  CHECK(a.rotation.isApprox(b.rotation, 1e-15));
  CHECK((a.translation - b.translation).norm() == 0.0);
}

TEST_CASE("all-invalid mask and quaternion underflow are errors") {
  nn::ParameterStore store;
  nn::Rng rng(68);
  DecoderHead head = make_decoder_head(store, rng);
  nn::Rng rng2(69);
  const Mat ps = randn(rng2, 4, 35), pt = randn(rng2, 4, 35);
  CHECK_THROWS_AS(decode_pose(ps, pt, head, std::vector<bool>(4, false)), UnregistrableError);

  for (auto& layer : head.fc.layers) {
    layer.weight->value.setZero();
    layer.bias->value.setZero();
  }
  // zero raw quaternion underflows the norm floor
  CHECK_THROWS_AS(decode_pose(ps, pt, head), NumericError);
}

TEST_CASE("canonicalization: returned quaternion has w >= 0") {
  nn::ParameterStore store;
  nn::Rng rng(70);
  DecoderHead head = make_decoder_head(store, rng);
  for (auto& layer : head.fc.layers) {
    layer.weight->value.setZero();
    layer.bias->value.setZero();
  }
  head.fc.layers.back().bias->value << -1, 0, 0, 1, 0.5, 0, 0;  // negative w
  nn::Rng rng2(71);
  const RigidTransform t = decode_pose(randn(rng2, 4, 35), randn(rng2, 4, 35), head);
  CHECK(t.rotation.w() >= 0.0);
}

TEST_CASE("max pooling mode agrees between plain and tape") {
  nn::ParameterStore store;
  nn::Rng rng(72);
  DecoderHead head = make_decoder_head(store, rng);
  const Mat ps = randn(rng, 8, 35), pt = randn(rng, 8, 35);
  std::vector<bool> valid(8, true);
  valid[0] = valid[6] = false;

  const RigidTransform plain = decode_pose(ps, pt, head, valid, PoolMode::Max);
  nn::Tape tape;
  const PoseTensors taped =
      decode_pose(tape, tape.constant(ps), tape.constant(pt), head, valid, PoolMode::Max);
  Quaternion q(taped.quat.val()(0, 0), taped.quat.val()(0, 1), taped.quat.val()(0, 2),
               taped.quat.val()(0, 3));
  if (q.w() < 0) q.coeffs() = -q.coeffs();
  CHECK(plain.rotation.isApprox(q, 1e-12));
}
