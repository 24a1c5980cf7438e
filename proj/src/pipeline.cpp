#include "eqgs/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>

namespace eqgs {

using nn::Mat;
using nn::Tensor;

std::unique_ptr<Model> build_model(const Config& config) {
  config.validate();
  auto model = std::make_unique<Model>();
  model->config = config;
  nn::Rng rng(nn::derive_seed(config.seed, 0xe9));
  model->descriptor = make_descriptor_stack(model->store, rng, config.descriptor_layers);
  model->egnn = make_egnn_stack(model->store, rng, config.egnn_layers);
  model->lrft = init_lrft(model->store, rng, config.lrft_n, config.lrft_r, config.lrft_n_out,
                          config.lrft_init_std);
  if (config.lrft_b_jitter > 0.0) {
    // an exactly-constant B is a training saddle: every column receives the
    // same gradient through mean pooling, so the compressed rows never
    // separate; a tiny seeded jitter breaks the tie
    Eigen::MatrixXd& B = model->lrft.B->value;
    for (int i = 0; i < B.rows(); ++i)
      for (int j = 0; j < B.cols(); ++j) B(i, j) += rng.normal(0.0, config.lrft_b_jitter);
  }
  model->decoder = make_decoder_head(model->store, rng);
  return model;
}

PreparedPair prepare_pair(const Config& config, const PointCloud& src_raw,
                          const PointCloud& tar_raw, const RigidTransform& gt,
                          const MatchList& omega) {
  if (src_raw.size() != config.num_points || tar_raw.size() != config.num_points)
    throw UsageError("prepare_pair: clouds must have exactly num_points points (got " +
                     std::to_string(src_raw.size()) + "/" + std::to_string(tar_raw.size()) +
                     ", expected " + std::to_string(config.num_points) + ")");

  const std::vector<int> src_order = ray_length_order(src_raw);
  const std::vector<int> tar_order = ray_length_order(tar_raw);
  std::vector<int> src_pos(src_order.size()), tar_pos(tar_order.size());
  for (size_t k = 0; k < src_order.size(); ++k) src_pos[src_order[k]] = static_cast<int>(k);
  for (size_t k = 0; k < tar_order.size(); ++k) tar_pos[tar_order[k]] = static_cast<int>(k);

  PreparedPair out;
  out.normalized =
      normalize_pair(order_by_ray_length(src_raw), order_by_ray_length(tar_raw), gt);
  for (const auto& [i, j] : omega) out.omega.emplace_back(src_pos[i], tar_pos[j]);
  std::sort(out.omega.begin(), out.omega.end());

  auto neighbors = [&](const PointCloud& pc) {
    return config.neighbor_mode == "knn"
               ? build_knn(pc, config.k)
               : build_ball_query(pc, config.ball_radius, config.max_neighbors);
  };
  out.src_edges = flatten_edges(neighbors(out.normalized.src));
  out.tar_edges = flatten_edges(neighbors(out.normalized.tar));

  if (src_raw.descriptors) {
    Eigen::MatrixXd d(src_raw.descriptors->rows(), src_raw.descriptors->cols());
    for (size_t k = 0; k < src_order.size(); ++k) d.row(k) = src_raw.descriptors->row(src_order[k]);
    out.src_descriptors = std::move(d);
  }
  if (tar_raw.descriptors) {
    Eigen::MatrixXd d(tar_raw.descriptors->rows(), tar_raw.descriptors->cols());
    for (size_t k = 0; k < tar_order.size(); ++k) d.row(k) = tar_raw.descriptors->row(tar_order[k]);
    out.tar_descriptors = std::move(d);
  }
  return out;
}

namespace {

// coords -> descriptors -> equivariant stack -> stacked N x 35 features
Tensor encode_frame(nn::Tape& tape, Model& model, const PointCloud& cloud,
                    const EdgeList& edges, const std::optional<Eigen::MatrixXd>& external) {
  Tensor coords = tape.constant(cloud.coords_matrix());
  Tensor h;
  if (external) {
    if (external->cols() != kDescriptorDim)
      throw UsageError("external descriptors must be 32-dim");
    h = tape.constant(*external);
  } else {
    h = compute_descriptors(tape, coords, edges, model.descriptor);
  }
  auto [h_out, x_out] = egnn_forward(h, coords, edges, model.egnn, model.config.distance_power);
  Tensor x_mean = mean_coord_embedding(x_out, edges);
  return concat_cols(h_out, x_mean);
}

}  // namespace

ForwardResult forward_pipeline(Model& model, const PreparedPair& pair, bool training,
                               bool with_loss) {
  const Config& cfg = model.config;
  ForwardResult res;
  res.tape = std::make_shared<nn::Tape>();
  nn::Tape& tape = *res.tape;

  Tensor H_src = encode_frame(tape, model, pair.normalized.src, pair.src_edges,
                              pair.src_descriptors);
  Tensor H_tar = encode_frame(tape, model, pair.normalized.tar, pair.tar_edges,
                              pair.tar_descriptors);

  Tensor Hc_src = apply_lrft(tape, model.lrft, H_src);
  Tensor Hc_tar = apply_lrft(tape, model.lrft, H_tar);

  SimilarityTape sim_tape = compute_similarity(tape, Hc_src, Hc_tar);
  res.S_pre = sim_tape.S_hat.val();

  SimilarityMatrix sim_plain;
  sim_plain.S = res.S_pre;
  sim_plain.row_valid = sim_tape.row_valid;
  sim_plain.effective_rank_target = cfg.lrft_r;
  SimilarityMatrix verified = verify_submatrices(sim_plain, cfg.det_tol);

  std::vector<bool> mask = verified.row_valid;
  if (training && verified.valid_count() == 0) {
    // verification rejected everything (typical at initialization); keep the
    // pre-verification rows so the step still produces gradients
    mask = sim_tape.row_valid;
  }
  res.sim = verified;
  res.provenance_src = compute_provenance(H_src.val(), Hc_src.val());
  res.provenance_tar = compute_provenance(H_tar.val(), Hc_tar.val());

  if (!training) {
    res.rank = effective_rank_fallback(verified, cfg.lrft_r, cfg.min_rank);
    res.registrable = res.rank.registrable;
    if (std::count(mask.begin(), mask.end(), true) == 0) {
      // nothing survived verification: no registration is produced; the
      // identity pose stands in so metrics see the unmoved source
      res.registrable = false;
      res.pose_normalized = RigidTransform::identity();
      res.pose_raw = pair.normalized.frame.denormalize(res.pose_normalized);
      return res;
    }
  }

  Tensor S_masked = apply_row_mask(tape, sim_tape.S_hat, mask);
  Tensor proj_src = matmul(transpose(S_masked), Hc_src);
  Tensor proj_tar = matmul(S_masked, Hc_tar);

  const PoolMode pool = cfg.decoder_pool == "max" ? PoolMode::Max : PoolMode::Mean;
  PoseTensors pose = decode_pose(tape, proj_src, proj_tar, model.decoder, mask, pool);

  const auto& qv = pose.quat.val();
  Quaternion q(qv(0, 0), qv(0, 1), qv(0, 2), qv(0, 3));
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  res.pose_normalized.rotation = q;
  res.pose_normalized.translation = pose.translation.val().row(0).transpose();
  res.pose_raw = pair.normalized.frame.denormalize(res.pose_normalized);

  if (with_loss) {
    Tensor rot = rotation_loss(tape, pose.quat, pair.normalized.gt.rotation);
    Tensor trans = translation_loss(tape, pose.translation, pair.normalized.gt.translation);
    Tensor reg = rank_regularizer(tape, sim_tape.S_hat, cfg.effective_reg_target());
    res.loss_total = rot + trans + cfg.beta * reg;
    res.loss = total_loss(rot.val()(0, 0), trans.val()(0, 0), reg.val()(0, 0), cfg.beta);
  }
  return res;
}

Trainer::Trainer(Model& m) : model(m), adam(m.config.lr) {}

std::vector<EpochStats> Trainer::run(const std::vector<ScenePair>& pairs, int epochs,
                                     std::ostream* log) {
  if (pairs.empty()) throw UsageError("train: dataset is empty");
  if (cached_for_ != &pairs) {
    cache_.clear();
    cache_.reserve(pairs.size());
    for (const auto& p : pairs)
      cache_.push_back(prepare_pair(model.config, p.src, p.tar, p.gt, p.gt_correspondences));
    cached_for_ = &pairs;
  }

  std::vector<EpochStats> stats;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    EpochStats s;
    for (size_t pi = 0; pi < cache_.size(); ++pi) {
      try {
        ForwardResult res = forward_pipeline(model, cache_[pi], /*training=*/true,
                                             /*with_loss=*/true);
        model.store.zero_grads();
        res.tape->backward(res.loss_total);
        adam.step(model.store);
        s.rot += res.loss.rot;
        s.trans += res.loss.trans;
        s.reg += res.loss.reg;
        s.total += res.loss.total;
      } catch (const NumericError& e) {
        throw NumericError("training aborted at epoch " + std::to_string(epoch) + ", pair " +
                           std::to_string(pi) + ": " + e.what());
      }
    }
    const double n = static_cast<double>(cache_.size());
    s.rot /= n;
    s.trans /= n;
    s.reg /= n;
    s.total /= n;
    stats.push_back(s);
    if (log) {
      char buf[256];
      std::snprintf(buf, sizeof(buf), "epoch %d\tL_rot %.6f\tL_trans %.6f\tL_Reg %.6f\tL_total %.6f\n",
                    epoch, s.rot, s.trans, s.reg, s.total);
      (*log) << buf << std::flush;
    }
  }
  return stats;
}

void Trainer::save_optimizer(const std::string& path) const {
  // Adam moments are required for bit-exact training resume.
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write optimizer state: " + path);
  out.write("EQOP", 4);
  adam.serialize(out);
  if (!out) throw UsageError("failed writing optimizer state: " + path);
}

void Trainer::load_optimizer(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open optimizer state: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "EQOP", 4) != 0)
    throw UsageError("not an optimizer state file: " + path);
  adam = nn::Adam(model.config.lr);
  adam.deserialize(in, model.store);
}

EvalReport evaluate_dataset(Model& model, const std::vector<ScenePair>& pairs) {
  if (pairs.empty()) throw UsageError("eval: dataset is empty");
  const Config& cfg = model.config;

  EvalReport report;
  report.pairs.resize(pairs.size());
  std::atomic<bool> failed{false};
  std::string error_message;
  std::mutex error_mutex;

  parallel_for(static_cast<int>(pairs.size()), worker_count(static_cast<int>(pairs.size())),
               [&](int pi) {
                 if (failed.load()) return;
                 try {
                   const ScenePair& sp = pairs[pi];
                   PreparedPair prep =
                       prepare_pair(cfg, sp.src, sp.tar, sp.gt, sp.gt_correspondences);
                   ForwardResult res =
                       forward_pipeline(model, prep, /*training=*/false, /*with_loss=*/false);

                   PairReport& pr = report.pairs[pi];
                   pr.id = pi;
                   pr.registrable = res.registrable;
                   pr.valid_rows = res.sim.valid_count();
                   pr.effective_rank = res.rank.rank;

                   EvalPair ep;
                   ep.src = prep.normalized.src;
                   ep.tar = prep.normalized.tar;
                   ep.omega = prep.omega;
                   ep.gt = prep.normalized.gt;
                   ep.t_hat = res.pose_normalized;
                   ep.registrable = res.registrable;
                   pr.outcome =
                       evaluate_pair(ep, cfg.tau, cfg.te_thresh, deg_to_rad(cfg.re_thresh_deg));

                   MatchList pred;
                   for (int i = 0; i < res.sim.size(); ++i) {
                     if (!res.sim.row_valid[i]) continue;
                     int jbest = 0;
                     for (int j = 1; j < res.sim.size(); ++j)
                       if (res.sim.S(i, j) > res.sim.S(i, jbest)) jbest = j;
                     pred.emplace_back(res.provenance_src[i], res.provenance_tar[jbest]);
                   }
                   pr.f1 = f1_score(pred, ep.omega, ep.src, ep.tar, ep.gt, cfg.tau);
                 } catch (const std::exception& e) {
                   std::lock_guard<std::mutex> lock(error_mutex);
                   error_message = e.what();
                   failed.store(true);
                 }
               });
  if (failed.load()) throw Error("eval failed: " + error_message);

  // paper-style summary: RE/TE averaged over successful registrations
  double re_sum = 0.0, te_sum = 0.0, f1_sum = 0.0, rmse_sum = 0.0;
  int successes = 0;
  for (const auto& pr : report.pairs) {
    if (pr.outcome.success) {
      re_sum += rad_to_deg(pr.outcome.re_rad);
      te_sum += pr.outcome.te;
      ++successes;
    }
    f1_sum += pr.f1;
    rmse_sum += pr.outcome.rmse;
  }
  const double n = static_cast<double>(report.pairs.size());
  report.summary.rr_percent = 100.0 * successes / n;
  report.summary.re_deg = successes ? re_sum / successes : 0.0;
  report.summary.te_cm = successes ? 100.0 * te_sum / successes : 0.0;
  report.summary.f1_percent = 100.0 * f1_sum / n;
  report.summary.rmse = rmse_sum / n;
  return report;
}

int worker_count(int jobs) {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("EQGS_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) hw = std::min(hw, cap);
  }
  return std::max(1, std::min(hw, jobs));
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace eqgs
