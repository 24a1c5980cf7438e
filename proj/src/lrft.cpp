#include "eqgs/lrft.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace eqgs {

using nn::Mat;
using nn::Tensor;

LrftParams init_lrft(nn::ParameterStore& store, nn::Rng& rng, int n, int r, int n_out,
                     double init_std) {
  if (r > std::min(n, n_out)) throw UsageError("init_lrft: rank must be <= min(N, N')");
  if (r < 1 || n < 1 || n_out < 1) throw UsageError("init_lrft: dimensions must be positive");
  LrftParams p;
  p.A = &store.create("lrft.A", n, r);
  p.B = &store.create("lrft.B", r, n_out);
  const double std = init_std > 0.0 ? init_std : std::sqrt(static_cast<double>(r));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < r; ++j) p.A->value(i, j) = rng.normal(0.0, std);
  p.B->value.setConstant(1e-4);
  return p;
}

Eigen::MatrixXd apply_lrft(const LrftParams& params, const Eigen::MatrixXd& H) {
  if (H.rows() != params.n()) throw UsageError("apply_lrft: H row count must equal N");
  return params.B->value.transpose() * (params.A->value.transpose() * H);
}

Tensor apply_lrft(nn::Tape& tape, const LrftParams& params, Tensor H) {
  if (H.rows() != params.n()) throw UsageError("apply_lrft: H row count must equal N");
  Tensor a = tape.param(*params.A);
  Tensor b = tape.param(*params.B);
  return matmul(transpose(b), matmul(transpose(a), H));
}

int numerical_rank(const Eigen::MatrixXd& M, double rel_threshold) {
  if (M.size() == 0) return 0;
  Eigen::JacobiSVD<Mat> svd(M);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) <= 0.0) return 0;
  const double cut = rel_threshold * sv(0);
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > cut) ++rank;
  return rank;
}

int verify_rank_product(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  if (A.cols() != B.rows()) throw UsageError("verify_rank_product: shapes not multiplicable");
  const int bound = std::min(numerical_rank(A), numerical_rank(B));
  const int rank_ab = numerical_rank(A * B);
  if (rank_ab > bound)
    throw NumericError("rank(AB) exceeded min(rank A, rank B): " + std::to_string(rank_ab) +
                       " > " + std::to_string(bound));
  return rank_ab;
}

}  // namespace eqgs
