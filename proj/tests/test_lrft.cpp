#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "eqgs/lrft.hpp"

using namespace eqgs;
using nn::Mat;

namespace {

Mat randn(nn::Rng& rng, int r, int c) {
  return Mat::NullaryExpr(r, c, [&](Eigen::Index, Eigen::Index) { return rng.normal(0, 1); });
}

}  // namespace

TEST_CASE("init_lrft draws A with std sqrt(r) and constant B") {
  nn::ParameterStore store;
  nn::Rng rng(41);
  const LrftParams p = init_lrft(store, rng, 1024, 35, 128);

  const double mean = p.A->value.mean();
  const double var = (p.A->value.array() - mean).square().mean();
  const double target = std::sqrt(35.0);
  CHECK(std::abs(std::sqrt(var) - target) / target < 0.10);

  CHECK((p.B->value.array() == 1e-4).all());

  nn::ParameterStore store2;
  nn::Rng rng2(41);
  const LrftParams p2 = init_lrft(store2, rng2, 1024, 35, 128);
  CHECK((p.A->value - p2.A->value).cwiseAbs().maxCoeff() == 0.0);  // seeded repeat
}

TEST_CASE("init_lrft rejects rank violations") {
  nn::ParameterStore store;
  nn::Rng rng(42);
  CHECK_THROWS_AS(init_lrft(store, rng, 8, 9, 16), UsageError);
}

TEST_CASE("apply_lrft: zero B gives zero; identity factors pass through") {
  nn::ParameterStore store;
  nn::Rng rng(43);
  LrftParams p = init_lrft(store, rng, 6, 6, 6);
  Mat H = randn(rng, 6, kStackedDim);

  p.B->value.setZero();
  CHECK(apply_lrft(p, H).cwiseAbs().maxCoeff() == 0.0);

  p.A->value = Mat::Identity(6, 6);
  p.B->value = Mat::Identity(6, 6);
  CHECK((apply_lrft(p, H) - H).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("factored product equals the dense oracle and the tape twin") {
  nn::ParameterStore store;
  nn::Rng rng(44);
  const LrftParams p = init_lrft(store, rng, 16, 3, 8);
  const Mat H = randn(rng, 16, kStackedDim);

  const Mat dense = (p.A->value * p.B->value).transpose() * H;
  const Mat factored = apply_lrft(p, H);
  CHECK((factored - dense).cwiseAbs().maxCoeff() < 1e-12);

  nn::Tape tape;
  const Mat taped = apply_lrft(tape, p, tape.constant(H)).val();
  CHECK((taped - dense).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("apply_lrft is linear") {
  nn::ParameterStore store;
  nn::Rng rng(45);
  const LrftParams p = init_lrft(store, rng, 12, 4, 8);
  const Mat H1 = randn(rng, 12, kStackedDim), H2 = randn(rng, 12, kStackedDim);
  const double alpha = 0.7, beta = -1.3;
  const Mat lhs = apply_lrft(p, alpha * H1 + beta * H2);
  const Mat rhs = alpha * apply_lrft(p, H1) + beta * apply_lrft(p, H2);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rank bound of the compressed output") {
  nn::ParameterStore store;
  nn::Rng rng(46);
  const LrftParams p = init_lrft(store, rng, 64, 5, 32);
  const Mat H = randn(rng, 64, kStackedDim);
  CHECK(numerical_rank(apply_lrft(p, H)) <= 5);
}

TEST_CASE("verify_rank_product cases") {
  CHECK(verify_rank_product(Mat::Identity(3, 3), Mat::Identity(3, 3)) == 3);

  nn::Rng rng(47);
  const Mat ones = Mat::Ones(4, 2);  // rank 1
  const Mat B = randn(rng, 2, 3);    // rank 2
  CHECK(verify_rank_product(ones, B) <= 1);

  const Mat A_big = randn(rng, 1024, 35);
  const Mat B_big = randn(rng, 35, 128);
  CHECK(verify_rank_product(A_big, B_big) <= 35);

  CHECK_THROWS_AS(verify_rank_product(Mat::Zero(2, 3), Mat::Zero(2, 3)), UsageError);
}
