#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "eqgs/error.hpp"

namespace eqgs::nn {

using Mat = Eigen::MatrixXd;

class Tape;

// Lightweight handle into a Tape. Values are 2-D (vectors are 1xN or Nx1,
// scalars 1x1).
struct Tensor {
  Tape* tape{nullptr};
  int id{-1};

  bool valid() const { return tape != nullptr && id >= 0; }
  const Mat& val() const;
  int rows() const { return static_cast<int>(val().rows()); }
  int cols() const { return static_cast<int>(val().cols()); }
};

// Named trainable value living outside any tape. Tape::backward accumulates
// into `grad`.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
};

enum class Op {
  Leaf,
  Param,
  Add,
  Sub,
  Mul,
  ScalarMul,
  ScalarAdd,
  MatMul,
  Transpose,
  AddRowVec,
  MulColVec,
  DivColVec,
  Relu,
  Tanh,
  Exp,
  Sqrt,
  Abs,
  Neg,
  Acos,
  Pow,
  ClampMin,
  Clamp,
  RowSum,
  SumAll,
  RowMin,
  GatherRows,
  ScatterSumRows,
  ConcatCols,
  SliceCols,
  Cross3,
  ColMax,
};

// Record of differentiable ops in creation (= topological) order. Every op
// checks its output for NaN/Inf and throws NumericError on violation.
class Tape {
 public:
  Tensor constant(Mat v) { return leaf(std::move(v), false); }
  Tensor leaf(Mat v, bool requires_grad);
  Tensor param(Parameter& p);

  const Mat& val(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  // Reverse pass from a scalar (1x1) loss. Visits each recorded op once, in
  // reverse order; accumulates into bound Parameter::grad. Gradients of
  // leaves/intermediates stay readable via grad_of until the next backward.
  void backward(Tensor loss);

  // Gradient of the last backward's loss w.r.t. t (zero matrix if none reached it).
  Mat grad_of(Tensor t) const;

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Op op;
    int a{-1}, b{-1};
    Mat value;
    Mat grad;
    bool requires_grad{false};
    double s0{0.0}, s1{0.0};
    int i0{0}, i1{0};
    std::vector<int> idx;
    Parameter* bound{nullptr};
  };

  int push(Node n, const char* what);
  Tensor make(Op op, int a, int b, Mat value, const char* what);

  std::vector<Node> nodes_;

  friend Tensor matmul(Tensor, Tensor);
  friend Tensor transpose(Tensor);
  friend Tensor operator+(Tensor, Tensor);
  friend Tensor operator-(Tensor, Tensor);
  friend Tensor operator*(Tensor, Tensor);
  friend Tensor operator*(double, Tensor);
  friend Tensor operator+(Tensor, double);
  friend Tensor operator-(Tensor);
  friend Tensor add_row_vec(Tensor, Tensor);
  friend Tensor mul_col_vec(Tensor, Tensor);
  friend Tensor div_col_vec(Tensor, Tensor);
  friend Tensor relu(Tensor);
  friend Tensor tanh_t(Tensor);
  friend Tensor exp_t(Tensor);
  friend Tensor sqrt_t(Tensor);
  friend Tensor abs_t(Tensor);
  friend Tensor acos_t(Tensor);
  friend Tensor pow_t(Tensor, double);
  friend Tensor clamp_min(Tensor, double);
  friend Tensor clamp(Tensor, double, double);
  friend Tensor row_sum(Tensor);
  friend Tensor sum_all(Tensor);
  friend Tensor row_min(Tensor);
  friend Tensor gather_rows(Tensor, const std::vector<int>&);
  friend Tensor scatter_sum_rows(Tensor, const std::vector<int>&, int);
  friend Tensor concat_cols(Tensor, Tensor);
  friend Tensor slice_cols(Tensor, int, int);
  friend Tensor cross3(Tensor, Tensor);
  friend Tensor col_max(Tensor);
};

Tensor matmul(Tensor a, Tensor b);
Tensor transpose(Tensor a);
Tensor operator+(Tensor a, Tensor b);
Tensor operator-(Tensor a, Tensor b);
Tensor operator*(Tensor a, Tensor b);  // elementwise
Tensor operator*(double s, Tensor a);
Tensor operator+(Tensor a, double s);
Tensor operator-(Tensor a);
Tensor add_row_vec(Tensor m, Tensor row);     // m: RxC, row: 1xC
Tensor mul_col_vec(Tensor m, Tensor col);     // m: RxC, col: Rx1
Tensor div_col_vec(Tensor m, Tensor col);
Tensor relu(Tensor a);
Tensor tanh_t(Tensor a);
Tensor exp_t(Tensor a);
Tensor sqrt_t(Tensor a);
Tensor abs_t(Tensor a);
Tensor acos_t(Tensor a);
Tensor pow_t(Tensor a, double p);
Tensor clamp_min(Tensor a, double lo);
Tensor clamp(Tensor a, double lo, double hi);
Tensor row_sum(Tensor a);                     // RxC -> Rx1
Tensor sum_all(Tensor a);                     // RxC -> 1x1
Tensor row_min(Tensor a);                     // Rx1; argmin fixed at forward
Tensor gather_rows(Tensor a, const std::vector<int>& idx);
Tensor scatter_sum_rows(Tensor a, const std::vector<int>& idx, int out_rows);
Tensor concat_cols(Tensor a, Tensor b);
Tensor slice_cols(Tensor a, int start, int len);
Tensor cross3(Tensor a, Tensor b);            // rowwise cross, Ex3 each
Tensor col_max(Tensor a);                     // RxC -> 1xC; argmax fixed at forward

// Composites.
Tensor row_l2_norm(Tensor a, double floor = 1e-12);          // Rx1, floored
Tensor row_l2_normalize(Tensor a, double floor = 1e-12);     // rows scaled to unit norm

}  // namespace eqgs::nn
