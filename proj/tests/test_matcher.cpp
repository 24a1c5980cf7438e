#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "eqgs/lrft.hpp"
#include "eqgs/matcher.hpp"

using namespace eqgs;
using nn::Mat;

namespace {

Mat randn(nn::Rng& rng, int r, int c) {
  return Mat::NullaryExpr(r, c, [&](Eigen::Index, Eigen::Index) { return rng.normal(0, 1); });
}

}  // namespace

TEST_CASE("self-match with orthogonal unit rows gives the identity") {
  Mat H = Mat::Zero(8, kStackedDim);
  for (int i = 0; i < 8; ++i) H(i, i) = 1.0;
  const SimilarityMatrix sim = compute_similarity(H, H);
  CHECK((sim.S - Mat::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-12);
  for (bool v : sim.row_valid) CHECK(v);
}

TEST_CASE("identical features give cosine 1 before normalization") {
  nn::Rng rng(51);
  Mat Hs = randn(rng, 8, kStackedDim);
  Mat Ht = Hs;
  // raw cosine of row i with itself is 1; after row normalization the
  // diagonal carries the row maximum
  const SimilarityMatrix sim = compute_similarity(Hs, Ht);
  for (int i = 0; i < 8; ++i) {
    int arg = 0;
    sim.S.row(i).maxCoeff(&arg);
    CHECK(arg == i);
  }
}

TEST_CASE("valid rows sum to one; zero-norm feature rows are invalidated") {
  nn::Rng rng(52);
  Mat Hs = randn(rng, 8, kStackedDim);
  Mat Ht = randn(rng, 8, kStackedDim);
  Hs.row(3).setZero();
  const SimilarityMatrix sim = compute_similarity(Hs, Ht);
  for (int i = 0; i < 8; ++i) {
    if (i == 3) {
      CHECK_FALSE(sim.row_valid[i]);
      CHECK(sim.S.row(i).cwiseAbs().maxCoeff() == 0.0);
    } else {
      CHECK(sim.row_valid[i]);
      CHECK(std::abs(sim.S.row(i).sum() - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("constant score rows become uniform") {
  // identical rows on both sides: every cosine is 1
  Mat Hs = Mat::Ones(8, kStackedDim);
  Mat Ht = Mat::Ones(8, kStackedDim);
  const SimilarityMatrix sim = compute_similarity(Hs, Ht);
  for (int i = 0; i < 8; ++i) {
    CHECK(sim.row_valid[i]);
    CHECK((sim.S.row(i).array() - 1.0 / 8).abs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("rank_regularizer cases and oracle") {
  SimilarityMatrix sim;
  sim.S = Mat::Zero(8, 8);
  sim.row_valid.assign(8, true);
  CHECK(rank_regularizer(sim, 35) == 35.0);

  sim.S = Mat::Identity(8, 8) * (3.0 / std::sqrt(8.0));  // frobenius norm exactly 3
  CHECK(rank_regularizer(sim, 3) < 1e-12);

  nn::Rng rng(53);
  sim.S = randn(rng, 8, 8);
  double frob_sq = 0.0;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) frob_sq += sim.S(i, j) * sim.S(i, j);
  CHECK(std::abs(rank_regularizer(sim, 3) - std::abs(std::sqrt(frob_sq) - 3.0)) < 1e-12);
}

TEST_CASE("verify_submatrices: identity stays valid, constant matrix dies") {
  SimilarityMatrix id;
  id.S = Mat::Identity(8, 8);
  id.row_valid.assign(8, true);
  const SimilarityMatrix v = verify_submatrices(id);
  for (bool b : v.row_valid) CHECK(b);

  SimilarityMatrix flat;
  flat.S = Mat::Constant(8, 8, 1.0 / 8);
  flat.row_valid.assign(8, true);
  const SimilarityMatrix f = verify_submatrices(flat);
  for (bool b : f.row_valid) CHECK_FALSE(b);
  CHECK(f.S.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("verify_submatrices invalidates duplicated (ambiguous) rows") {
  // a strongly diagonal similarity, then two adjacent rows made identical:
  // each centered window contains both copies, so its determinant vanishes
  Mat S = Mat::Identity(12, 12) * 0.9;
  S.array() += 0.1 / 12;
  S.row(5) = S.row(6);
  SimilarityMatrix sim;
  sim.S = S;
  sim.row_valid.assign(12, true);
  for (int i = 0; i < 12; ++i) sim.S.row(i) /= sim.S.row(i).sum();

  // SVD oracle: both centered windows are rank-deficient
  for (int i : {5, 6}) {
    int j = 0;
    sim.S.row(i).maxCoeff(&j);
    const int r0 = std::clamp(i - 3, 0, 12 - 7);
    const int c0 = std::clamp(j - 3, 0, 12 - 7);
    CHECK(numerical_rank(sim.S.block(r0, c0, 7, 7)) < 7);
  }

  const SimilarityMatrix v = verify_submatrices(sim);
  CHECK_FALSE(v.row_valid[5]);
  CHECK_FALSE(v.row_valid[6]);
}

TEST_CASE("verify_submatrices requires N' >= 7") {
  SimilarityMatrix tiny;
  tiny.S = Mat::Identity(6, 6);
  tiny.row_valid.assign(6, true);
  CHECK_THROWS_AS(verify_submatrices(tiny), UsageError);
}

TEST_CASE("effective_rank_fallback bounds and the unregistrable flag") {
  // full identity: well-conditioned, rank = min(r, N')
  SimilarityMatrix id;
  id.S = Mat::Identity(128, 128);
  id.row_valid.assign(128, true);
  const EffectiveRank full = effective_rank_fallback(id, 35);
  CHECK(full.rank == 35);
  CHECK(full.registrable);

  // 20 valid rows -> rank <= 20, >= 16 still registrable when well-conditioned
  SimilarityMatrix some;
  some.S = Mat::Zero(128, 128);
  some.row_valid.assign(128, false);
  for (int i = 0; i < 20; ++i) {
    some.S(i, i) = 1.0;
    some.row_valid[i] = true;
  }
  const EffectiveRank partial = effective_rank_fallback(some, 35);
  CHECK(partial.rank <= 20);
  CHECK(partial.rank >= 16);
  CHECK(partial.registrable);

  // 10 valid rows -> below the floor
  SimilarityMatrix few;
  few.S = Mat::Zero(128, 128);
  few.row_valid.assign(128, false);
  for (int i = 0; i < 10; ++i) {
    few.S(i, i) = 1.0;
    few.row_valid[i] = true;
  }
  CHECK_FALSE(effective_rank_fallback(few, 35).registrable);
}

TEST_CASE("project_features: identity, permutation, and the product oracle") {
  nn::Rng rng(55);
  const Mat Hs = randn(rng, 8, kStackedDim), Ht = randn(rng, 8, kStackedDim);

  SimilarityMatrix id;
  id.S = Mat::Identity(8, 8);
  id.row_valid.assign(8, true);
  auto [ps, pt] = project_features(id, Hs, Ht);
  CHECK((ps - Hs).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((pt - Ht).cwiseAbs().maxCoeff() < 1e-15);

  SimilarityMatrix perm;
  perm.S = Mat::Zero(8, 8);
  for (int i = 0; i < 8; ++i) perm.S(i, (i + 3) % 8) = 1.0;
  perm.row_valid.assign(8, true);
  auto [qs, qt] = project_features(perm, Hs, Ht);
  for (int i = 0; i < 8; ++i) {
    CHECK((qs.row((i + 3) % 8) - Hs.row(i)).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((qt.row(i) - Ht.row((i + 3) % 8)).cwiseAbs().maxCoeff() < 1e-15);
  }

  SimilarityMatrix rnd = compute_similarity(randn(rng, 8, kStackedDim), Ht);
  auto [rs, rt] = project_features(rnd, Hs, Ht);
  Mat rs_o = Mat::Zero(8, kStackedDim), rt_o = Mat::Zero(8, kStackedDim);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j)
      for (int c = 0; c < kStackedDim; ++c) {
        rs_o(j, c) += rnd.S(i, j) * Hs(i, c);
        rt_o(i, c) += rnd.S(i, j) * Ht(j, c);
      }
  CHECK((rs - rs_o).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((rt - rt_o).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("tape similarity equals the plain version and masks rows") {
  nn::Rng rng(56);
  Mat Hs = randn(rng, 9, kStackedDim), Ht = randn(rng, 9, kStackedDim);
  Hs.row(2).setZero();

  const SimilarityMatrix plain = compute_similarity(Hs, Ht);
  nn::Tape tape;
  const SimilarityTape taped = compute_similarity(tape, tape.constant(Hs), tape.constant(Ht));
  CHECK((taped.S_hat.val() - plain.S).cwiseAbs().maxCoeff() < 1e-12);
  for (int i = 0; i < 9; ++i) CHECK(taped.row_valid[i] == plain.row_valid[i]);

  std::vector<bool> mask(9, true);
  mask[5] = false;
  const Mat masked = apply_row_mask(tape, taped.S_hat, mask).val();
  CHECK(masked.row(5).cwiseAbs().maxCoeff() == 0.0);
  CHECK((masked.row(1) - plain.S.row(1)).cwiseAbs().maxCoeff() < 1e-15);

  const double r = 7.0;
  const double reg_plain = rank_regularizer(plain, 7);
  const double reg_tape = rank_regularizer(tape, taped.S_hat, r).val()(0, 0);
  CHECK(std::abs(reg_plain - reg_tape) < 1e-12);
}
