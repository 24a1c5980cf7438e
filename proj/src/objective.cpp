#include "eqgs/objective.hpp"

#include <cmath>
#include <sstream>

namespace eqgs {

using nn::Mat;
using nn::Tensor;

namespace {

constexpr double kAcosMargin = 1e-9;

void check_rotation(const Mat3& R, const char* who) {
  if ((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6)
    throw NumericError(std::string(who) + ": input is not orthonormal");
  if (R.determinant() < 0.0)
    throw NumericError(std::string(who) + ": input is a reflection, not a rotation");
}

}  // namespace

double rotation_loss(const Mat3& R_hat, const Mat3& R_star) {
  check_rotation(R_hat, "rotation_loss");
  check_rotation(R_star, "rotation_loss");
  const double arg = ((R_hat.transpose() * R_star).trace() - 1.0) / 2.0;
  return std::acos(std::clamp(arg, -1.0 + kAcosMargin, 1.0 - kAcosMargin));
}

double translation_loss(const Vec3& t_hat, const Vec3& t_star) {
  return (t_hat - t_star).squaredNorm();
}

LossBreakdown total_loss(double rot, double trans, double reg, double beta) {
  if (rot < 0.0 || trans < 0.0 || reg < 0.0)
    throw UsageError("total_loss: components must be nonnegative");
  LossBreakdown l;
  l.rot = rot;
  l.trans = trans;
  l.reg = reg;
  l.beta = beta;
  l.total = rot + trans + beta * reg;
  return l;
}

Tensor rotation_loss(nn::Tape& tape, Tensor q_hat, const Quaternion& q_star) {
  if (q_hat.rows() != 1 || q_hat.cols() != 4)
    throw UsageError("rotation_loss: quaternion tensor must be 1x4");
  Mat qs(1, 4);
  qs << q_star.w(), q_star.x(), q_star.y(), q_star.z();
  Tensor d = sum_all(q_hat * tape.constant(qs));
  // trace identity: trace(R_hat^T R_star) = 4 <q_hat, q_star>^2 - 1
  Tensor cosang = clamp(2.0 * (d * d) + (-1.0), -1.0 + kAcosMargin, 1.0 - kAcosMargin);
  return acos_t(cosang);
}

Tensor translation_loss(nn::Tape& tape, Tensor t_hat, const Vec3& t_star) {
  if (t_hat.rows() != 1 || t_hat.cols() != 3)
    throw UsageError("translation_loss: translation tensor must be 1x3");
  Mat ts(1, 3);
  ts << t_star.x(), t_star.y(), t_star.z();
  Tensor diff = t_hat - tape.constant(ts);
  return sum_all(diff * diff);
}

PairOutcome evaluate_pair(const EvalPair& pair, double tau, double te_thresh,
                          double re_thresh_rad) {
  if (pair.omega.empty()) throw UsageError("evaluate_pair: empty correspondence set");

  PairOutcome out;
  double inliers = 0.0;
  double sq_sum = 0.0;
  for (const auto& [i, j] : pair.omega) {
    const double sq =
        (apply_transform(pair.t_hat, pair.src.points.at(i)) - pair.tar.points.at(j)).squaredNorm();
    if (sq < tau) inliers += 1.0;  // squared residual against tau, as defined
    sq_sum += sq;
  }
  const double n = static_cast<double>(pair.omega.size());
  out.delta = std::sqrt(inliers / n);
  out.rmse = std::sqrt(sq_sum / n);
  out.re_rad = rotation_loss(quat_to_matrix(pair.t_hat.rotation), quat_to_matrix(pair.gt.rotation));
  out.te = (pair.t_hat.translation - pair.gt.translation).norm();
  out.success = pair.registrable && out.te < te_thresh && out.re_rad < re_thresh_rad;
  return out;
}

RecallReport registration_recall(const std::vector<EvalPair>& pairs, double tau,
                                 double te_thresh, double re_thresh_rad) {
  if (pairs.empty()) throw UsageError("registration_recall: no pairs");
  RecallReport rep;
  for (const auto& p : pairs) {
    const PairOutcome o = evaluate_pair(p, tau, te_thresh, re_thresh_rad);
    rep.threshold_rr += o.success ? 1.0 : 0.0;
    rep.delta_rr += o.delta;
    rep.rmse += o.rmse;
  }
  const double n = static_cast<double>(pairs.size());
  rep.threshold_rr /= n;
  rep.delta_rr /= n;
  rep.rmse /= n;
  return rep;
}

double f1_score(const MatchList& pred, const MatchList& gt_matches, const PointCloud& src,
                const PointCloud& tar, const RigidTransform& gt, double tau) {
  if (pred.empty() && gt_matches.empty()) return 0.0;
  int tp = 0;
  for (const auto& [i, j] : pred) {
    const double dist =
        (apply_transform(gt, src.points.at(i)) - tar.points.at(j)).norm();
    if (dist < tau) ++tp;
  }
  const double precision = pred.empty() ? 0.0 : static_cast<double>(tp) / pred.size();
  const double recall =
      gt_matches.empty() ? 0.0 : static_cast<double>(tp) / gt_matches.size();
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

std::string metric_report_tsv(const std::vector<std::pair<std::string, MetricReport>>& rows) {
  std::ostringstream out;
  out << "split\tre_deg\tte_cm\trr_percent\tf1_percent\trmse\truntime_s\n";
  char buf[256];
  for (const auto& [name, m] : rows) {
    std::snprintf(buf, sizeof(buf), "%s\t%.6g\t%.6g\t%.6g\t%.6g\t%.6g\t%.6g\n", name.c_str(),
                  m.re_deg, m.te_cm, m.rr_percent, m.f1_percent, m.rmse, m.runtime_s);
    out << buf;
  }
  return out.str();
}

}  // namespace eqgs
