#pragma once

#include <utility>
#include <vector>

#include "eqgs/geometry.hpp"
#include "eqgs/nn.hpp"

namespace eqgs {

struct LossBreakdown {
  double rot{0.0};    // radians
  double trans{0.0};  // squared length
  double reg{0.0};
  double beta{0.05};
  double total{0.0};
};

// Geodesic angle arccos((trace(R_hat^T R_star) - 1)/2), argument clamped to
// (-1, 1) by 1e-9. Errors on non-rotation inputs (orthonormality off by > 1e-6).
double rotation_loss(const Mat3& R_hat, const Mat3& R_star);

double translation_loss(const Vec3& t_hat, const Vec3& t_star);

LossBreakdown total_loss(double rot, double trans, double reg, double beta = 0.05);

// Tape rotation loss on unit quaternions: arccos(2 <q_hat, q_star>^2 - 1),
// identical to the matrix form. q_hat is 1x4, already normalized.
nn::Tensor rotation_loss(nn::Tape& tape, nn::Tensor q_hat, const Quaternion& q_star);
nn::Tensor translation_loss(nn::Tape& tape, nn::Tensor t_hat, const Vec3& t_star);

using MatchList = std::vector<std::pair<int, int>>;

struct EvalPair {
  PointCloud src;
  PointCloud tar;
  MatchList omega;  // ground-truth correspondences (src index, tar index)
  RigidTransform t_hat;
  RigidTransform gt;
  bool registrable{true};
};

struct PairOutcome {
  double delta{0.0};  // sqrt of inlier fraction (squared residual < tau)
  double rmse{0.0};
  double re_rad{0.0};
  double te{0.0};
  bool success{false};
};

PairOutcome evaluate_pair(const EvalPair& pair, double tau, double te_thresh,
                          double re_thresh_rad);

struct RecallReport {
  double threshold_rr{0.0};  // fraction of pairs under the RE/TE thresholds
  double delta_rr{0.0};      // mean delta over pairs
  double rmse{0.0};          // mean RMSE over pairs
};

RecallReport registration_recall(const std::vector<EvalPair>& pairs, double tau,
                                 double te_thresh, double re_thresh_rad);

// Precision/recall of predicted matches against gt residuals; 0 when both are 0.
double f1_score(const MatchList& pred, const MatchList& gt_matches, const PointCloud& src,
                const PointCloud& tar, const RigidTransform& gt, double tau);

struct MetricReport {
  double re_deg{0.0};
  double te_cm{0.0};
  double rr_percent{0.0};
  double f1_percent{0.0};
  double rmse{0.0};
  double runtime_s{0.0};
};

std::string metric_report_tsv(const std::vector<std::pair<std::string, MetricReport>>& rows);

constexpr double kPi = 3.14159265358979323846;

inline double rad_to_deg(double r) { return r * 180.0 / kPi; }
inline double deg_to_rad(double d) { return d * kPi / 180.0; }

}  // namespace eqgs
