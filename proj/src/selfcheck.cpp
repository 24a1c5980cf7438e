#include "eqgs/selfcheck.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "eqgs/pipeline.hpp"

namespace eqgs {

using nn::Mat;

namespace {

PointCloud random_cloud(nn::Rng& rng, int n, double span = 1.0) {
  PointCloud pc;
  pc.points.reserve(n);
  for (int i = 0; i < n; ++i)
    pc.points.emplace_back(rng.uniform(-span, span), rng.uniform(-span, span),
                           rng.uniform(-span, span));
  return pc;
}

RigidTransform random_se3(nn::Rng& rng) {
  Vec3 axis(rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1));
  if (axis.norm() < 1e-12) axis = Vec3::UnitZ();
  axis.normalize();
  RigidTransform t;
  t.rotation = Quaternion(Eigen::AngleAxisd(rng.uniform(0.0, kPi), axis));
  t.translation = Vec3(rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1));
  return t;
}

int count_degenerate_edges(const Eigen::MatrixXd& coords, const EdgeList& edges) {
  const Eigen::RowVector3d center = coords.colwise().mean();
  int count = 0;
  for (int e = 0; e < edges.edge_count(); ++e) {
    const Vec3 xi = (coords.row(edges.target[e]) - center).transpose();
    const Vec3 xk = (coords.row(edges.source[e]) - center).transpose();
    if (xi.cross(xk).norm() < 1e-9) ++count;
  }
  return count;
}

double rel_err(const Mat& got, const Mat& want) {
  const double scale = std::max(want.norm(), 1e-12);
  return (got - want).norm() / scale;
}

}  // namespace

CheckResult check_equivariance() {
  const auto t0 = std::chrono::steady_clock::now();
  const int sizes[] = {8, 16, 64};
  double worst_coord = 0.0, worst_hidden = 0.0;
  long degenerate = 0, total_edges = 0;

  for (int trial = 0; trial < 100; ++trial) {
    nn::Rng rng(nn::derive_seed(0xe91ull, trial));
    const int n = sizes[trial % 3];

    nn::ParameterStore store;
    nn::Rng wrng(nn::derive_seed(77, trial));
    auto layers = make_egnn_stack(store, wrng, 4);

    FeatureGraph g;
    PointCloud pc = random_cloud(rng, n);
    g.coord_embeddings = pc.coords_matrix();
    g.node_features = Mat::NullaryExpr(n, kNodeDim, [&](Eigen::Index, Eigen::Index) {
      return rng.normal(0.0, 1.0);
    });
    g.neighbors = build_knn(pc, std::min(6, n - 1));

    const EdgeList edges = flatten_edges(g.neighbors);
    const int deg = count_degenerate_edges(g.coord_embeddings, edges);
    degenerate += deg;
    total_edges += edges.edge_count();

    const RigidTransform t = random_se3(rng);
    const Mat3 R = quat_to_matrix(t.rotation);

    FeatureGraph g_moved = g;
    g_moved.coord_embeddings =
        (g.coord_embeddings * R.transpose()).rowwise() + t.translation.transpose();

    const FeatureGraph out = run_egnn_stack(g, layers);
    const FeatureGraph out_moved = run_egnn_stack(g_moved, layers);

    if (deg > 0) continue;  // fallback axes are not rotation-equivariant
    const Mat expected_coords =
        (out.coord_embeddings * R.transpose()).rowwise() + t.translation.transpose();
    worst_coord = std::max(worst_coord, rel_err(out_moved.coord_embeddings, expected_coords));
    worst_hidden = std::max(worst_hidden, rel_err(out_moved.node_features, out.node_features));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double deg_pct = 100.0 * degenerate / std::max(1L, total_edges);

  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "coord rel err %.3g, hidden rel err %.3g, degenerate edges %.3f%%, %.1fs",
                worst_coord, worst_hidden, deg_pct, secs);
  const bool pass =
      worst_coord < 1e-5 && worst_hidden < 1e-5 && deg_pct < 1.0 && secs < 30.0;
  return {"equivariance", pass, buf};
}

CheckResult check_rank_theorem() {
  int violations = 0;
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    nn::Rng rng(nn::derive_seed(0x2a2b, trial));
    const int m = 1 + static_cast<int>(rng.raw() % 12);
    const int k = 1 + static_cast<int>(rng.raw() % 12);
    const int n = 1 + static_cast<int>(rng.raw() % 12);
    const int ra = 1 + static_cast<int>(rng.raw() % static_cast<uint64_t>(std::min(m, k)));
    const int rb = 1 + static_cast<int>(rng.raw() % static_cast<uint64_t>(std::min(k, n)));

    auto randn = [&](int r, int c) {
      return Mat::NullaryExpr(r, c, [&](Eigen::Index, Eigen::Index) { return rng.normal(0, 1); });
    };
    const Mat A = randn(m, ra) * randn(ra, k);
    const Mat B = randn(k, rb) * randn(rb, n);
    try {
      verify_rank_product(A, B);  // throws on a bound violation
    } catch (const NumericError&) {
      ++violations;
    }
    ++checked;
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%d combinations, %d violations", checked, violations);
  return {"rank_theorem", violations == 0, buf};
}

CheckResult check_gradients() {
  Config cfg;
  cfg.num_points = 8;
  cfg.lrft_n = 8;
  cfg.lrft_r = 4;
  cfg.lrft_n_out = 8;
  cfg.neighbor_mode = "knn";
  cfg.k = 3;
  cfg.seed = 17;

  auto model = build_model(cfg);
  nn::Rng rng(1234);
  PointCloud src = random_cloud(rng, 8);
  RigidTransform gt = random_se3(rng);
  gt.translation *= 0.1;
  PointCloud tar = apply_transform(gt, src);
  const PreparedPair prep = prepare_pair(cfg, src, tar, gt);

  auto loss_value = [&]() {
    ForwardResult r = forward_pipeline(*model, prep, /*training=*/true, /*with_loss=*/true);
    return r.loss.total;
  };

  ForwardResult res = forward_pipeline(*model, prep, true, true);
  model->store.zero_grads();
  res.tape->backward(res.loss_total);

  const double eps = 1e-5;
  long total = 0, passed = 0;
  double worst = 0.0;
  for (auto& p : model->store.all()) {
    const Mat analytic = p->grad.size() ? p->grad : Mat::Zero(p->value.rows(), p->value.cols());
    for (int r = 0; r < p->value.rows(); ++r)
      for (int c = 0; c < p->value.cols(); ++c) {
        const double saved = p->value(r, c);
        p->value(r, c) = saved + eps;
        const double up = loss_value();
        p->value(r, c) = saved - eps;
        const double down = loss_value();
        p->value(r, c) = saved;
        const double fd = (up - down) / (2.0 * eps);
        const double an = analytic(r, c);
        const double err = std::abs(fd - an);
        const double tol = 1e-6 + 1e-4 * std::max(std::abs(fd), std::abs(an));
        ++total;
        if (err <= tol) ++passed;
        else worst = std::max(worst, err / std::max({std::abs(fd), std::abs(an), 1e-6}));
      }
  }
  const double frac = 100.0 * passed / std::max(1L, total);
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%ld/%ld parameters within tolerance (%.3f%%), worst rel %.3g",
                passed, total, frac, worst);
  return {"gradient_check", frac >= 99.0, buf};
}

CheckResult check_similarity_contracts() {
  int row_sum_bad = 0, window_bad = 0, reg_bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    nn::Rng rng(nn::derive_seed(0x51a1ull, trial));
    const int n = 8 + static_cast<int>(rng.raw() % 9);
    auto randn = [&](int r, int c) {
      return Mat::NullaryExpr(r, c, [&](Eigen::Index, Eigen::Index) { return rng.normal(0, 1); });
    };
    const Mat Hs = randn(n, kStackedDim);
    const Mat Ht = randn(n, kStackedDim);
    const SimilarityMatrix sim = compute_similarity(Hs, Ht);

    for (int i = 0; i < n; ++i) {
      const double sum = sim.S.row(i).sum();
      if (sim.row_valid[i] && std::abs(sum - 1.0) > 1e-9) ++row_sum_bad;
      if (!sim.row_valid[i] && sim.S.row(i).cwiseAbs().maxCoeff() != 0.0) ++row_sum_bad;
    }

    const SimilarityMatrix verified = verify_submatrices(sim);
    for (int i = 0; i < n; ++i) {
      if (!verified.row_valid[i]) continue;
      int j = 0;
      sim.S.row(i).maxCoeff(&j);
      const bool interior = (i >= 3 && i <= n - 4 && j >= 3 && j <= n - 4);
      const int w = interior ? 7 : 5;
      const int r0 = std::clamp(i - w / 2, 0, n - w);
      const int c0 = std::clamp(j - w / 2, 0, n - w);
      if (numerical_rank(sim.S.block(r0, c0, w, w), 1e-12) < w) ++window_bad;
    }

    const int r_target = 1 + static_cast<int>(rng.raw() % 35);
    double frob_sq = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) frob_sq += sim.S(i, j) * sim.S(i, j);
    const double oracle = std::abs(std::sqrt(frob_sq) - r_target);
    if (std::abs(rank_regularizer(sim, r_target) - oracle) > 1e-12) ++reg_bad;
  }
  char buf[256];
  std::snprintf(buf, sizeof(buf), "row-sum violations %d, window-rank violations %d, reg %d",
                row_sum_bad, window_bad, reg_bad);
  return {"similarity_contracts", row_sum_bad == 0 && window_bad == 0 && reg_bad == 0, buf};
}

CheckResult check_metric_formulas() {
  nn::Rng rng(99);
  bool ok = true;
  std::string detail;

  // delta of the recall definition: sqrt(inlier fraction), squared residual vs tau
  const double tau = 0.1;
  EvalPair pair;
  pair.src = random_cloud(rng, 100);
  pair.tar = pair.src;
  for (int i = 0; i < 100; ++i) {
    pair.omega.emplace_back(i, i);
    // first 50 points: residual^2 below tau; last 50: above
    pair.tar.points[i] += (i < 50) ? Vec3(0.1, 0, 0) : Vec3(1.0, 0, 0);
  }
  const PairOutcome half = evaluate_pair(pair, tau, 0.3, deg_to_rad(15.0));
  if (std::abs(half.delta - std::sqrt(0.5)) > 1e-9) {
    ok = false;
    detail += "delta(50% inliers) off; ";
  }

  EvalPair perfect = pair;
  perfect.tar = perfect.src;
  const PairOutcome po = evaluate_pair(perfect, tau, 0.3, deg_to_rad(15.0));
  if (std::abs(po.delta - 1.0) > 1e-12 || po.rmse != 0.0) {
    ok = false;
    detail += "perfect-transform case off; ";
  }

  EvalPair none = pair;
  for (auto& p : none.tar.points) p += Vec3(2.0, 0, 0);
  if (evaluate_pair(none, tau, 0.3, deg_to_rad(15.0)).delta != 0.0) {
    ok = false;
    detail += "no-inlier case off; ";
  }

  // F1 formula cases
  PointCloud src = random_cloud(rng, 10);
  PointCloud tar = src;
  MatchList all;
  for (int i = 0; i < 10; ++i) all.emplace_back(i, i);
  if (std::abs(f1_score(all, all, src, tar, RigidTransform::identity(), 0.01) - 1.0) > 1e-12) {
    ok = false;
    detail += "F1(P=R=1) != 1; ";
  }
  if (f1_score({}, all, src, tar, RigidTransform::identity(), 0.01) != 0.0) {
    ok = false;
    detail += "F1(no predictions) != 0; ";
  }
  {
    // 4 true positives out of 5 predictions, 8 ground-truth matches:
    // precision 0.8, recall 0.5 -> F1 = 2*0.4/1.3
    PointCloud tar2 = src;
    tar2.points[9] += Vec3(1.0, 0, 0);
    MatchList pred = {{0, 0}, {1, 1}, {2, 2}, {3, 3}, {9, 9}};
    MatchList gt8;
    for (int i = 0; i < 8; ++i) gt8.emplace_back(i, i);
    const double f1 = f1_score(pred, gt8, src, tar2, RigidTransform::identity(), 0.01);
    if (std::abs(f1 - 2.0 * 0.4 / 1.3) > 1e-12) {
      ok = false;
      detail += "F1(0.8, 0.5) off; ";
    }
  }
  if (ok) detail = "delta and F1 formula cases exact";
  return {"metric_formulas", ok, detail};
}

std::vector<CheckResult> run_property_suite() {
  return {check_equivariance(), check_rank_theorem(), check_gradients(),
          check_similarity_contracts(), check_metric_formulas()};
}

bool run_selfcheck(std::ostream& out) {
  bool all = true;
  for (const auto& r : run_property_suite()) {
    out << (r.pass ? "PASS" : "FAIL") << "  " << r.name << ": " << r.detail << "\n";
    all = all && r.pass;
  }
  out << (all ? "selfcheck passed" : "selfcheck FAILED") << "\n";
  return all;
}

}  // namespace eqgs
