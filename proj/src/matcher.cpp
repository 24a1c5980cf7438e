#include "eqgs/matcher.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace eqgs {

using nn::Mat;
using nn::Tensor;

namespace {

constexpr double kZeroNormTol = 1e-12;
constexpr double kZeroSumTol = 1e-12;

int row_argmax(const Eigen::RowVectorXd& row) {
  int best = 0;
  for (int j = 1; j < row.size(); ++j)
    if (row(j) > row(best)) best = j;
  return best;
}

}  // namespace

int SimilarityMatrix::valid_count() const {
  int v = 0;
  for (bool b : row_valid) v += b ? 1 : 0;
  return v;
}

SimilarityMatrix compute_similarity(const Eigen::MatrixXd& Hs, const Eigen::MatrixXd& Ht) {
  if (Hs.rows() != Ht.rows()) throw UsageError("compute_similarity: row counts disagree");
  const int n = static_cast<int>(Hs.rows());

  Mat hs = Hs, ht = Ht;
  std::vector<bool> valid(n, true);
  for (int i = 0; i < n; ++i) {
    const double ns = hs.row(i).norm();
    const double nt = ht.row(i).norm();
    if (ns >= kZeroNormTol) hs.row(i) /= ns;
    if (nt >= kZeroNormTol) ht.row(i) /= nt;
    if (ns < kZeroNormTol || nt < kZeroNormTol) valid[i] = false;
  }

  SimilarityMatrix out;
  out.S = hs * ht.transpose();
  out.row_valid = valid;
  for (int i = 0; i < n; ++i) {
    if (!valid[i]) {
      out.S.row(i).setZero();
      continue;
    }
    const double mn = out.S.row(i).minCoeff();
    out.S.row(i).array() -= mn;
    const double sum = out.S.row(i).sum();
    if (sum < kZeroSumTol) {
      // constant score row carries no preference; use the uniform assignment
      out.S.row(i).setConstant(1.0 / n);
    } else {
      out.S.row(i) /= sum;
    }
  }
  return out;
}

double rank_regularizer(const SimilarityMatrix& s_hat, int r) {
  return std::abs(s_hat.S.norm() - static_cast<double>(r));
}

SimilarityMatrix verify_submatrices(const SimilarityMatrix& s_hat, double det_tol) {
  const int n = s_hat.size();
  if (n < 7) throw UsageError("verify_submatrices: similarity matrix must be at least 7x7");

  SimilarityMatrix out = s_hat;
  std::vector<int> to_invalidate;
  for (int i = 0; i < n; ++i) {
    if (!s_hat.row_valid[i]) continue;
    const int j = row_argmax(s_hat.S.row(i));
    const bool interior = (i >= 3 && i <= n - 4 && j >= 3 && j <= n - 4);
    const int w = interior ? 7 : 5;
    const int r0 = std::clamp(i - w / 2, 0, n - w);
    const int c0 = std::clamp(j - w / 2, 0, n - w);
    Mat window = s_hat.S.block(r0, c0, w, w);
    const double scale = window.cwiseAbs().maxCoeff();
    bool singular = scale <= 0.0;
    if (!singular) {
      window /= scale;
      singular = std::abs(window.determinant()) < det_tol;
    }
    if (singular) to_invalidate.push_back(i);
  }
  for (int i : to_invalidate) {
    out.row_valid[i] = false;
    out.S.row(i).setZero();
  }
  return out;
}

EffectiveRank effective_rank_fallback(const SimilarityMatrix& s_hat, int r, int min_rank) {
  EffectiveRank out;
  const int v = s_hat.valid_count();
  if (v == 0) return out;

  Mat valid_rows(v, s_hat.S.cols());
  int w = 0;
  for (int i = 0; i < s_hat.size(); ++i)
    if (s_hat.row_valid[i]) valid_rows.row(w++) = s_hat.S.row(i);

  Eigen::JacobiSVD<Mat> svd(valid_rows);
  const auto& sv = svd.singularValues();
  const int cap = std::min(r, v);
  int rank = 0;
  for (int k = 0; k < std::min<int>(cap, sv.size()); ++k) {
    if (sv(0) <= 0.0) break;
    if (sv(k) / sv(0) > 1e-8) rank = k + 1;
  }
  out.rank = rank;
  out.registrable = (v >= min_rank) && (rank >= min_rank);
  return out;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> project_features(const SimilarityMatrix& s_hat,
                                                             const Eigen::MatrixXd& Hs,
                                                             const Eigen::MatrixXd& Ht) {
  if (Hs.rows() != s_hat.size() || Ht.rows() != s_hat.size())
    throw UsageError("project_features: feature row counts must equal N'");
  return {s_hat.S.transpose() * Hs, s_hat.S * Ht};
}

SimilarityTape compute_similarity(nn::Tape& tape, Tensor Hs, Tensor Ht) {
  if (Hs.rows() != Ht.rows()) throw UsageError("compute_similarity: row counts disagree");
  const int n = Hs.rows();

  std::vector<bool> valid(n, true);
  for (int i = 0; i < n; ++i)
    if (Hs.val().row(i).norm() < kZeroNormTol || Ht.val().row(i).norm() < kZeroNormTol)
      valid[i] = false;

  Tensor hs = row_l2_normalize(Hs, kZeroNormTol);
  Tensor ht = row_l2_normalize(Ht, kZeroNormTol);
  Tensor S = matmul(hs, transpose(ht));

  Tensor mn = row_min(S);
  Tensor shifted = S - mul_col_vec(tape.constant(Mat::Ones(n, n)), mn);
  Tensor sums = row_sum(shifted);

  // Rows that are invalid or constant leave the differentiable path; they are
  // patched in as constants (zero and uniform rows respectively).
  std::vector<int> special;
  for (int i = 0; i < n; ++i)
    if (!valid[i] || sums.val()(i, 0) < kZeroSumTol) special.push_back(i);

  Tensor normalized = div_col_vec(shifted, clamp_min(sums, kZeroSumTol));
  SimilarityTape out;
  out.row_valid = valid;
  if (special.empty()) {
    out.S_hat = normalized;
    return out;
  }

  Mat keep = Mat::Ones(n, 1);
  Mat patch = Mat::Zero(n, n);
  for (int i : special) {
    keep(i, 0) = 0.0;
    if (valid[i]) patch.row(i).setConstant(1.0 / n);  // constant row -> uniform
  }
  out.S_hat = mul_col_vec(normalized, tape.constant(keep)) + tape.constant(patch);
  return out;
}

Tensor rank_regularizer(nn::Tape& tape, Tensor S_hat, double r) {
  Tensor frob = sqrt_t(clamp_min(sum_all(S_hat * S_hat), 1e-30));
  (void)tape;
  return abs_t(frob + (-r));
}

Tensor apply_row_mask(nn::Tape& tape, Tensor M, const std::vector<bool>& mask) {
  if (static_cast<int>(mask.size()) != M.rows())
    throw UsageError("apply_row_mask: mask length mismatch");
  Mat m(M.rows(), 1);
  for (int i = 0; i < M.rows(); ++i) m(i, 0) = mask[i] ? 1.0 : 0.0;
  return mul_col_vec(M, tape.constant(m));
}

}  // namespace eqgs
