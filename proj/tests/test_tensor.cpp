#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>

#include "eqgs/nn.hpp"

using namespace eqgs;
using nn::Mat;
using nn::Tape;
using nn::Tensor;

namespace {

Mat randn(nn::Rng& rng, int r, int c) {
  return Mat::NullaryExpr(r, c, [&](Eigen::Index, Eigen::Index) { return rng.normal(0, 1); });
}

// central-difference gradient of a scalar circuit w.r.t. one leaf matrix
Mat fd_grad(const std::function<double(const Mat&)>& f, const Mat& x0, double eps = 1e-6) {
  Mat g(x0.rows(), x0.cols());
  Mat x = x0;
  for (int r = 0; r < x.rows(); ++r)
    for (int c = 0; c < x.cols(); ++c) {
      const double saved = x(r, c);
      x(r, c) = saved + eps;
      const double up = f(x);
      x(r, c) = saved - eps;
      const double down = f(x);
      x(r, c) = saved;
      g(r, c) = (up - down) / (2 * eps);
    }
  return g;
}

void check_close(const Mat& a, const Mat& b, double tol = 1e-6) {
  REQUIRE(a.rows() == b.rows());
  REQUIRE(a.cols() == b.cols());
  CHECK((a - b).cwiseAbs().maxCoeff() < tol);
}

// checks d(sum of op(x) elements)/dx against finite differences
void check_op_grad(const std::function<Tensor(Tape&, Tensor)>& op, const Mat& x0) {
  auto eval = [&](const Mat& x) {
    Tape tape;
    Tensor t = tape.leaf(x, true);
    Tensor y = op(tape, t);
    Tensor loss = sum_all(y);
    return loss.val()(0, 0);
  };
  Tape tape;
  Tensor t = tape.leaf(x0, true);
  Tensor loss = sum_all(op(tape, t));
  tape.backward(loss);
  check_close(tape.grad_of(t), fd_grad(eval, x0));
}

}  // namespace

TEST_CASE("simple scalar gradients") {
  // d(x*x)/dx at 3 is 6
  Tape tape;
  Tensor x = tape.leaf(Mat::Constant(1, 1, 3.0), true);
  Tensor loss = x * x;
  tape.backward(loss);
  CHECK(tape.grad_of(x)(0, 0) == doctest::Approx(6.0));

  // constant loss: zero grads
  Tape tape2;
  Tensor y = tape2.leaf(Mat::Constant(1, 1, 5.0), true);
  Tensor c = tape2.constant(Mat::Constant(1, 1, 2.0));
  Tensor loss2 = sum_all(c * c);
  tape2.backward(loss2);
  CHECK(tape2.grad_of(y)(0, 0) == 0.0);
}

TEST_CASE("matmul against the naive triple loop") {
  nn::Rng rng(1);
  const Mat a = randn(rng, 4, 5), b = randn(rng, 5, 3);
  Tape tape;
  const Mat got = matmul(tape.constant(a), tape.constant(b)).val();
  Mat want = Mat::Zero(4, 3);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 5; ++k) want(i, j) += a(i, k) * b(k, j);
  check_close(got, want, 1e-12);
}

TEST_CASE("elementwise and structural op gradients match finite differences") {
  nn::Rng rng(2);
  const Mat x = randn(rng, 4, 3);
  const Mat positive = x.cwiseAbs().array() + 0.5;

  check_op_grad([](Tape&, Tensor t) { return relu(t); }, x);
  check_op_grad([](Tape&, Tensor t) { return tanh_t(t); }, x);
  check_op_grad([](Tape&, Tensor t) { return exp_t(t); }, x);
  check_op_grad([](Tape&, Tensor t) { return sqrt_t(t); }, positive);
  check_op_grad([](Tape&, Tensor t) { return abs_t(t); }, x);
  check_op_grad([](Tape&, Tensor t) { return pow_t(t, 0.5); }, positive);
  check_op_grad([](Tape&, Tensor t) { return 2.5 * t; }, x);
  check_op_grad([](Tape&, Tensor t) { return t + 1.25; }, x);
  check_op_grad([](Tape&, Tensor t) { return -t; }, x);
  check_op_grad([](Tape&, Tensor t) { return row_sum(t); }, x);
  check_op_grad([](Tape&, Tensor t) { return row_min(t); }, x);
  check_op_grad([](Tape&, Tensor t) { return transpose(t); }, x);
  check_op_grad([](Tape&, Tensor t) { return slice_cols(t, 1, 2); }, x);
  check_op_grad([](Tape&, Tensor t) { return gather_rows(t, {2, 0, 1, 2, 3}); }, x);
  check_op_grad([](Tape&, Tensor t) { return scatter_sum_rows(t, {1, 0, 1, 5}, 6); }, x);
  check_op_grad([](Tape&, Tensor t) { return col_max(t); }, x);
  check_op_grad([](Tape&, Tensor t) { return clamp_min(t, 0.1); }, positive);
  check_op_grad([](Tape&, Tensor t) { return clamp(t, -0.5, 0.5); }, x);
  check_op_grad([](Tape&, Tensor t) { return row_l2_normalize(t); }, positive);
}

TEST_CASE("binary op gradients match finite differences") {
  nn::Rng rng(3);
  const Mat a0 = randn(rng, 3, 3), b0 = randn(rng, 3, 3);
  const Mat col0 = randn(rng, 3, 1).cwiseAbs().array() + 0.5;

  auto eval_two = [&](const std::function<Tensor(Tensor, Tensor)>& op, const Mat& a,
                      const Mat& b) {
    Tape tape;
    Tensor ta = tape.leaf(a, true);
    Tensor tb = tape.leaf(b, true);
    Tensor loss = sum_all(op(ta, tb));
    tape.backward(loss);
    auto f_a = [&](const Mat& m) {
      Tape t2;
      return sum_all(op(t2.leaf(m, false), t2.leaf(b, false))).val()(0, 0);
    };
    auto f_b = [&](const Mat& m) {
      Tape t2;
      return sum_all(op(t2.leaf(a, false), t2.leaf(m, false))).val()(0, 0);
    };
    check_close(tape.grad_of(ta), fd_grad(f_a, a));
    check_close(tape.grad_of(tb), fd_grad(f_b, b));
  };

  eval_two([](Tensor a, Tensor b) { return a + b; }, a0, b0);
  eval_two([](Tensor a, Tensor b) { return a - b; }, a0, b0);
  eval_two([](Tensor a, Tensor b) { return a * b; }, a0, b0);
  eval_two([](Tensor a, Tensor b) { return matmul(a, b); }, a0, b0);
  eval_two([](Tensor a, Tensor b) { return concat_cols(a, b); }, a0, b0);
  eval_two([](Tensor a, Tensor b) { return cross3(a, b); }, a0, b0);
  eval_two([](Tensor a, Tensor b) { return mul_col_vec(a, b); }, a0, col0);
  eval_two([](Tensor a, Tensor b) { return div_col_vec(a, b); }, a0, col0);
  eval_two([](Tensor a, Tensor b) { return add_row_vec(a, b); }, a0, randn(rng, 1, 3));
}

TEST_CASE("acos gradient away from the clamp") {
  nn::Rng rng(4);
  Mat x(2, 2);
  x << 0.3, -0.6, 0.1, 0.8;
  check_op_grad([](Tape&, Tensor t) { return acos_t(t); }, x);
}

TEST_CASE("backward requires a scalar loss and rejects non-finite values") {
  Tape tape;
  Tensor x = tape.leaf(Mat::Ones(2, 2), true);
  CHECK_THROWS_AS(tape.backward(x), UsageError);

  Mat bad(1, 1);
  bad << std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(tape.leaf(bad, false), NumericError);
}

TEST_CASE("tape reaches parameters through shared subexpressions") {
  nn::Rng rng(5);
  nn::Parameter p;
  p.name = "w";
  p.value = randn(rng, 2, 2);

  Tape tape;
  Tensor w = tape.param(p);
  Tensor y = matmul(w, w);  // w used twice
  tape.backward(sum_all(y));

  auto f = [&](const Mat& m) {
    Tape t2;
    Tensor a = t2.leaf(m, false);
    return sum_all(matmul(a, a)).val()(0, 0);
  };
  check_close(p.grad, fd_grad(f, p.value));
}
