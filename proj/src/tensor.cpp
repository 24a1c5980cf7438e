#include "eqgs/tensor.hpp"

#include <cmath>

namespace eqgs::nn {

const Mat& Tensor::val() const {
  if (!valid()) throw Error("use of an empty tensor handle");
  return tape->val(id);
}

namespace {

void check_same_tape(Tensor a, Tensor b) {
  if (a.tape != b.tape) throw Error("tensors belong to different tapes");
}

}  // namespace

int Tape::push(Node n, const char* what) {
  if (!n.value.allFinite())
    throw NumericError(std::string("non-finite values produced by op ") + what);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::make(Op op, int a, int b, Mat value, const char* what) {
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.value = std::move(value);
  n.requires_grad = (a >= 0 && nodes_[a].requires_grad) || (b >= 0 && nodes_[b].requires_grad);
  return Tensor{this, push(std::move(n), what)};
}

Tensor Tape::leaf(Mat v, bool requires_grad) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(v);
  n.requires_grad = requires_grad;
  return Tensor{this, push(std::move(n), "leaf")};
}

Tensor Tape::param(Parameter& p) {
  Node n;
  n.op = Op::Param;
  n.value = p.value;
  n.requires_grad = true;
  n.bound = &p;
  return Tensor{this, push(std::move(n), "param")};
}

Tensor matmul(Tensor a, Tensor b) {
  check_same_tape(a, b);
  if (a.cols() != b.rows()) throw UsageError("matmul: inner dimensions disagree");
  return a.tape->make(Op::MatMul, a.id, b.id, a.val() * b.val(), "matmul");
}

Tensor transpose(Tensor a) {
  return a.tape->make(Op::Transpose, a.id, -1, a.val().transpose(), "transpose");
}

Tensor operator+(Tensor a, Tensor b) {
  check_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw UsageError("add: shape mismatch");
  return a.tape->make(Op::Add, a.id, b.id, a.val() + b.val(), "add");
}

Tensor operator-(Tensor a, Tensor b) {
  check_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw UsageError("sub: shape mismatch");
  return a.tape->make(Op::Sub, a.id, b.id, a.val() - b.val(), "sub");
}

Tensor operator*(Tensor a, Tensor b) {
  check_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw UsageError("mul: shape mismatch");
  return a.tape->make(Op::Mul, a.id, b.id, a.val().cwiseProduct(b.val()), "mul");
}

Tensor operator*(double s, Tensor a) {
  Tensor t = a.tape->make(Op::ScalarMul, a.id, -1, s * a.val(), "scalar_mul");
  a.tape->nodes_[t.id].s0 = s;
  return t;
}

Tensor operator+(Tensor a, double s) {
  Tensor t = a.tape->make(Op::ScalarAdd, a.id, -1, a.val().array() + s, "scalar_add");
  a.tape->nodes_[t.id].s0 = s;
  return t;
}

Tensor operator-(Tensor a) {
  return a.tape->make(Op::Neg, a.id, -1, -a.val(), "neg");
}

Tensor add_row_vec(Tensor m, Tensor row) {
  check_same_tape(m, row);
  if (row.rows() != 1 || row.cols() != m.cols()) throw UsageError("add_row_vec: shape mismatch");
  Mat v = m.val();
  v.rowwise() += row.val().row(0);
  return m.tape->make(Op::AddRowVec, m.id, row.id, std::move(v), "add_row_vec");
}

Tensor mul_col_vec(Tensor m, Tensor col) {
  check_same_tape(m, col);
  if (col.cols() != 1 || col.rows() != m.rows()) throw UsageError("mul_col_vec: shape mismatch");
  Mat v = m.val().array().colwise() * col.val().col(0).array();
  return m.tape->make(Op::MulColVec, m.id, col.id, std::move(v), "mul_col_vec");
}

Tensor div_col_vec(Tensor m, Tensor col) {
  check_same_tape(m, col);
  if (col.cols() != 1 || col.rows() != m.rows()) throw UsageError("div_col_vec: shape mismatch");
  Mat v = m.val().array().colwise() / col.val().col(0).array();
  return m.tape->make(Op::DivColVec, m.id, col.id, std::move(v), "div_col_vec");
}

Tensor relu(Tensor a) {
  return a.tape->make(Op::Relu, a.id, -1, a.val().cwiseMax(0.0), "relu");
}

Tensor tanh_t(Tensor a) {
  return a.tape->make(Op::Tanh, a.id, -1, a.val().array().tanh(), "tanh");
}

Tensor exp_t(Tensor a) {
  return a.tape->make(Op::Exp, a.id, -1, a.val().array().exp(), "exp");
}

Tensor sqrt_t(Tensor a) {
  return a.tape->make(Op::Sqrt, a.id, -1, a.val().array().sqrt(), "sqrt");
}

Tensor abs_t(Tensor a) {
  return a.tape->make(Op::Abs, a.id, -1, a.val().array().abs(), "abs");
}

Tensor acos_t(Tensor a) {
  return a.tape->make(Op::Acos, a.id, -1, a.val().array().acos(), "acos");
}

Tensor pow_t(Tensor a, double p) {
  Tensor t = a.tape->make(Op::Pow, a.id, -1, a.val().array().pow(p), "pow");
  a.tape->nodes_[t.id].s0 = p;
  return t;
}

Tensor clamp_min(Tensor a, double lo) {
  Tensor t = a.tape->make(Op::ClampMin, a.id, -1, a.val().cwiseMax(lo), "clamp_min");
  a.tape->nodes_[t.id].s0 = lo;
  return t;
}

Tensor clamp(Tensor a, double lo, double hi) {
  Tensor t = a.tape->make(Op::Clamp, a.id, -1, a.val().cwiseMax(lo).cwiseMin(hi), "clamp");
  a.tape->nodes_[t.id].s0 = lo;
  a.tape->nodes_[t.id].s1 = hi;
  return t;
}

Tensor row_sum(Tensor a) {
  return a.tape->make(Op::RowSum, a.id, -1, a.val().rowwise().sum(), "row_sum");
}

Tensor sum_all(Tensor a) {
  Mat v(1, 1);
  v(0, 0) = a.val().sum();
  return a.tape->make(Op::SumAll, a.id, -1, std::move(v), "sum_all");
}

Tensor row_min(Tensor a) {
  const Mat& v = a.val();
  Mat out(v.rows(), 1);
  std::vector<int> arg(v.rows());
  for (int r = 0; r < v.rows(); ++r) {
    int c;
    out(r, 0) = v.row(r).minCoeff(&c);
    arg[r] = c;
  }
  Tensor t = a.tape->make(Op::RowMin, a.id, -1, std::move(out), "row_min");
  a.tape->nodes_[t.id].idx = std::move(arg);
  return t;
}

Tensor gather_rows(Tensor a, const std::vector<int>& idx) {
  const Mat& v = a.val();
  Mat out(static_cast<int>(idx.size()), v.cols());
  for (size_t e = 0; e < idx.size(); ++e) {
    if (idx[e] < 0 || idx[e] >= v.rows()) throw UsageError("gather_rows: index out of range");
    out.row(static_cast<int>(e)) = v.row(idx[e]);
  }
  Tensor t = a.tape->make(Op::GatherRows, a.id, -1, std::move(out), "gather_rows");
  a.tape->nodes_[t.id].idx = idx;
  return t;
}

Tensor scatter_sum_rows(Tensor a, const std::vector<int>& idx, int out_rows) {
  const Mat& v = a.val();
  if (static_cast<int>(idx.size()) != v.rows())
    throw UsageError("scatter_sum_rows: index count must equal row count");
  Mat out = Mat::Zero(out_rows, v.cols());
  for (size_t e = 0; e < idx.size(); ++e) {
    if (idx[e] < 0 || idx[e] >= out_rows) throw UsageError("scatter_sum_rows: index out of range");
    out.row(idx[e]) += v.row(static_cast<int>(e));
  }
  Tensor t = a.tape->make(Op::ScatterSumRows, a.id, -1, std::move(out), "scatter_sum_rows");
  a.tape->nodes_[t.id].idx = idx;
  return t;
}

Tensor concat_cols(Tensor a, Tensor b) {
  check_same_tape(a, b);
  if (a.rows() != b.rows()) throw UsageError("concat_cols: row counts disagree");
  Mat out(a.rows(), a.cols() + b.cols());
  out << a.val(), b.val();
  return a.tape->make(Op::ConcatCols, a.id, b.id, std::move(out), "concat_cols");
}

Tensor slice_cols(Tensor a, int start, int len) {
  if (start < 0 || len < 1 || start + len > a.cols()) throw UsageError("slice_cols: out of range");
  Tensor t = a.tape->make(Op::SliceCols, a.id, -1, a.val().middleCols(start, len), "slice_cols");
  a.tape->nodes_[t.id].i0 = start;
  a.tape->nodes_[t.id].i1 = len;
  return t;
}

Tensor cross3(Tensor a, Tensor b) {
  check_same_tape(a, b);
  if (a.cols() != 3 || b.cols() != 3 || a.rows() != b.rows())
    throw UsageError("cross3: expects matching Ex3 inputs");
  const Mat& u = a.val();
  const Mat& w = b.val();
  Mat out(u.rows(), 3);
  for (int r = 0; r < u.rows(); ++r)
    out.row(r) = Eigen::Vector3d(u.row(r)).cross(Eigen::Vector3d(w.row(r))).transpose();
  return a.tape->make(Op::Cross3, a.id, b.id, std::move(out), "cross3");
}

Tensor col_max(Tensor a) {
  const Mat& v = a.val();
  Mat out(1, v.cols());
  std::vector<int> arg(v.cols());
  for (int c = 0; c < v.cols(); ++c) {
    int r;
    out(0, c) = v.col(c).maxCoeff(&r);
    arg[c] = r;
  }
  Tensor t = a.tape->make(Op::ColMax, a.id, -1, std::move(out), "col_max");
  a.tape->nodes_[t.id].idx = std::move(arg);
  return t;
}

Tensor row_l2_norm(Tensor a, double floor) {
  return clamp_min(sqrt_t(row_sum(a * a)), floor);
}

Tensor row_l2_normalize(Tensor a, double floor) {
  return div_col_vec(a, row_l2_norm(a, floor));
}

void Tape::backward(Tensor loss) {
  if (loss.tape != this) throw Error("backward: loss from another tape");
  Node& top = nodes_[loss.id];
  if (top.value.rows() != 1 || top.value.cols() != 1)
    throw UsageError("backward: loss must be a 1x1 scalar");

  for (auto& n : nodes_) n.grad.resize(0, 0);
  top.grad = Mat::Ones(1, 1);

  auto g_of = [&](int id) -> Mat& { return nodes_[id].grad; };
  auto accum = [&](int id, const Mat& g) {
    if (id < 0 || !nodes_[id].requires_grad) return;
    Node& t = nodes_[id];
    if (t.grad.size() == 0) t.grad = Mat::Zero(t.value.rows(), t.value.cols());
    t.grad += g;
  };

  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    const Mat& g = n.grad;
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Param:
        if (n.bound->grad.size() == 0)
          n.bound->grad = Mat::Zero(n.value.rows(), n.value.cols());
        n.bound->grad += g;
        break;
      case Op::Add:
        accum(n.a, g);
        accum(n.b, g);
        break;
      case Op::Sub:
        accum(n.a, g);
        accum(n.b, -g);
        break;
      case Op::Mul:
        accum(n.a, g.cwiseProduct(nodes_[n.b].value));
        accum(n.b, g.cwiseProduct(nodes_[n.a].value));
        break;
      case Op::ScalarMul:
        accum(n.a, n.s0 * g);
        break;
      case Op::ScalarAdd:
        accum(n.a, g);
        break;
      case Op::MatMul:
        accum(n.a, g * nodes_[n.b].value.transpose());
        accum(n.b, nodes_[n.a].value.transpose() * g);
        break;
      case Op::Transpose:
        accum(n.a, g.transpose());
        break;
      case Op::AddRowVec:
        accum(n.a, g);
        accum(n.b, g.colwise().sum());
        break;
      case Op::MulColVec: {
        const Mat& m = nodes_[n.a].value;
        const Mat& c = nodes_[n.b].value;
        accum(n.a, g.array().colwise() * c.col(0).array());
        accum(n.b, g.cwiseProduct(m).rowwise().sum());
        break;
      }
      case Op::DivColVec: {
        const Mat& c = nodes_[n.b].value;
        accum(n.a, g.array().colwise() / c.col(0).array());
        Mat gb = -(g.cwiseProduct(n.value).rowwise().sum().array() / c.col(0).array());
        accum(n.b, gb);
        break;
      }
      case Op::Relu:
        accum(n.a, (nodes_[n.a].value.array() > 0.0).cast<double>() * g.array());
        break;
      case Op::Tanh:
        accum(n.a, (1.0 - n.value.array().square()) * g.array());
        break;
      case Op::Exp:
        accum(n.a, n.value.cwiseProduct(g));
        break;
      case Op::Sqrt:
        accum(n.a, (0.5 / n.value.array()) * g.array());
        break;
      case Op::Abs:
        accum(n.a, nodes_[n.a].value.array().sign() * g.array());
        break;
      case Op::Neg:
        accum(n.a, -g);
        break;
      case Op::Acos:
        accum(n.a, -g.array() / (1.0 - nodes_[n.a].value.array().square()).sqrt());
        break;
      case Op::Pow:
        accum(n.a, n.s0 * nodes_[n.a].value.array().pow(n.s0 - 1.0) * g.array());
        break;
      case Op::ClampMin:
        accum(n.a, (nodes_[n.a].value.array() >= n.s0).cast<double>() * g.array());
        break;
      case Op::Clamp:
        accum(n.a, ((nodes_[n.a].value.array() > n.s0) && (nodes_[n.a].value.array() < n.s1))
                           .cast<double>() *
                       g.array());
        break;
      case Op::RowSum:
        accum(n.a, g.col(0).replicate(1, nodes_[n.a].value.cols()));
        break;
      case Op::SumAll:
        accum(n.a, Mat::Constant(nodes_[n.a].value.rows(), nodes_[n.a].value.cols(), g(0, 0)));
        break;
      case Op::RowMin: {
        Mat ga = Mat::Zero(nodes_[n.a].value.rows(), nodes_[n.a].value.cols());
        for (int r = 0; r < ga.rows(); ++r) ga(r, n.idx[r]) = g(r, 0);
        accum(n.a, ga);
        break;
      }
      case Op::GatherRows: {
        Mat ga = Mat::Zero(nodes_[n.a].value.rows(), nodes_[n.a].value.cols());
        for (size_t e = 0; e < n.idx.size(); ++e) ga.row(n.idx[e]) += g.row(static_cast<int>(e));
        accum(n.a, ga);
        break;
      }
      case Op::ScatterSumRows: {
        Mat ga(nodes_[n.a].value.rows(), nodes_[n.a].value.cols());
        for (size_t e = 0; e < n.idx.size(); ++e) ga.row(static_cast<int>(e)) = g.row(n.idx[e]);
        accum(n.a, ga);
        break;
      }
      case Op::ConcatCols:
        accum(n.a, g.leftCols(nodes_[n.a].value.cols()));
        accum(n.b, g.rightCols(nodes_[n.b].value.cols()));
        break;
      case Op::SliceCols: {
        Mat ga = Mat::Zero(nodes_[n.a].value.rows(), nodes_[n.a].value.cols());
        ga.middleCols(n.i0, n.i1) = g;
        accum(n.a, ga);
        break;
      }
      case Op::ColMax: {
        Mat ga = Mat::Zero(nodes_[n.a].value.rows(), nodes_[n.a].value.cols());
        for (int c = 0; c < ga.cols(); ++c) ga(n.idx[c], c) = g(0, c);
        accum(n.a, ga);
        break;
      }
      case Op::Cross3: {
        const Mat& u = nodes_[n.a].value;
        const Mat& w = nodes_[n.b].value;
        Mat ga(u.rows(), 3), gb(u.rows(), 3);
        for (int r = 0; r < u.rows(); ++r) {
          const Eigen::Vector3d gr(g.row(r)), ur(u.row(r)), wr(w.row(r));
          ga.row(r) = wr.cross(gr).transpose();
          gb.row(r) = gr.cross(ur).transpose();
        }
        accum(n.a, ga);
        accum(n.b, gb);
        break;
      }
    }
  }
}

Mat Tape::grad_of(Tensor t) const {
  const Node& n = nodes_[t.id];
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

}  // namespace eqgs::nn
