#pragma once

#include "eqgs/nn.hpp"

namespace eqgs {

constexpr int kStackedDim = 35;  // 32 hidden + 3 mean coordinate-embedding dims

// Factor pair of the low-rank feature transform: compresses N stacked feature
// rows to n_out through rank r. One shared pair serves both frames.
struct LrftParams {
  nn::Parameter* A{nullptr};  // N x r
  nn::Parameter* B{nullptr};  // r x n_out

  int n() const { return static_cast<int>(A->value.rows()); }
  int rank() const { return static_cast<int>(A->value.cols()); }
  int n_out() const { return static_cast<int>(B->value.cols()); }
};

// A ~ N(0, init_std^2) with init_std = sqrt(r) unless overridden; B constant 1e-4.
LrftParams init_lrft(nn::ParameterStore& store, nn::Rng& rng, int n, int r, int n_out,
                     double init_std = -1.0);

// (AB)^T H computed factored as B^T (A^T H); never materializes the N x n_out product.
Eigen::MatrixXd apply_lrft(const LrftParams& params, const Eigen::MatrixXd& H);
nn::Tensor apply_lrft(nn::Tape& tape, const LrftParams& params, nn::Tensor H);

// Numerical rank of AB via singular values (sigma > 1e-10 * sigma_max);
// asserts the product bound rank(AB) <= min(rank A, rank B).
int verify_rank_product(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

// Numerical rank with the same threshold.
int numerical_rank(const Eigen::MatrixXd& M, double rel_threshold = 1e-10);

}  // namespace eqgs
