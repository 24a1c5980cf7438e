#pragma once

#include <vector>

#include "eqgs/nn.hpp"

namespace eqgs {

// Row-normalized similarity scores between compressed frames. Valid rows sum
// to 1; invalidated rows are all-zero.
struct SimilarityMatrix {
  Eigen::MatrixXd S;            // N' x N'
  std::vector<bool> row_valid;  // N'
  int effective_rank_target{0};

  int size() const { return static_cast<int>(S.rows()); }
  int valid_count() const;
};

// Cosine scores of row-normalized features, then each row shifted to
// nonnegative (minus row min) and divided by its sum. Zero-norm feature rows
// are invalidated; an all-constant score row becomes the uniform row.
SimilarityMatrix compute_similarity(const Eigen::MatrixXd& Hs, const Eigen::MatrixXd& Ht);

// |frobenius_norm(S) - r|  ( = |sqrt(trace(S^T S)) - r| ).
double rank_regularizer(const SimilarityMatrix& s_hat, int r);

// Per valid row, the 7x7 window centered at (i, argmax_j S_ij) — 5x5 clamped
// at borders — must have |det| >= det_tol after scaling by 1/max|entry|;
// failing rows are zeroed. Requires N' >= 7.
SimilarityMatrix verify_submatrices(const SimilarityMatrix& s_hat, double det_tol = 1e-6);

struct EffectiveRank {
  int rank{0};
  bool registrable{false};
};

// Largest r' <= min(r, #valid rows) at which the valid-row submatrix passes
// numerical full rank (sigma_{r'}/sigma_max > 1e-8), floored at min_rank;
// below the floor the pair is flagged unregistrable.
EffectiveRank effective_rank_fallback(const SimilarityMatrix& s_hat, int r, int min_rank = 16);

// (S^T Hs, S Ht); invalidated rows contribute nothing.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> project_features(const SimilarityMatrix& s_hat,
                                                             const Eigen::MatrixXd& Hs,
                                                             const Eigen::MatrixXd& Ht);

// --- tape twins -------------------------------------------------------------

// Tape similarity: returns the normalized matrix and reports per-row validity
// and constant rows (treated as locally constant uniform rows).
struct SimilarityTape {
  nn::Tensor S_hat;
  std::vector<bool> row_valid;
};

SimilarityTape compute_similarity(nn::Tape& tape, nn::Tensor Hs, nn::Tensor Ht);

nn::Tensor rank_regularizer(nn::Tape& tape, nn::Tensor S_hat, double r);

// Zero out rows whose mask entry is false (mask is a constant on the tape).
nn::Tensor apply_row_mask(nn::Tape& tape, nn::Tensor M, const std::vector<bool>& mask);

}  // namespace eqgs
