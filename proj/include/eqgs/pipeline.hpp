#pragma once

#include <functional>
#include <iosfwd>
#include <memory>

#include "eqgs/config.hpp"
#include "eqgs/data.hpp"
#include "eqgs/decoder.hpp"
#include "eqgs/descriptor.hpp"
#include "eqgs/egnn.hpp"
#include "eqgs/lrft.hpp"
#include "eqgs/matcher.hpp"

namespace eqgs {

// The full registration model; parameters deterministically initialized from
// config.seed.
struct Model {
  Config config;
  nn::ParameterStore store;
  DescriptorStack descriptor;
  std::vector<EgnnLayer> egnn;
  LrftParams lrft;
  DecoderHead decoder;
};

std::unique_ptr<Model> build_model(const Config& config);

// Per-pair preprocessing shared by training and evaluation: ray ordering,
// canonical normalization, neighbor construction. Correspondence indices are
// remapped through the orderings.
struct PreparedPair {
  NormalizedPair normalized;
  EdgeList src_edges;
  EdgeList tar_edges;
  MatchList omega;
  std::optional<Eigen::MatrixXd> src_descriptors;  // external, bypasses the stack
  std::optional<Eigen::MatrixXd> tar_descriptors;
};

PreparedPair prepare_pair(const Config& config, const PointCloud& src_raw,
                          const PointCloud& tar_raw,
                          const RigidTransform& gt = RigidTransform::identity(),
                          const MatchList& omega = {});

// One full forward pass over a prepared pair. With `training` set, a step
// whose verification mask would invalidate every row falls back to the
// pre-verification validity so gradients keep flowing.
struct ForwardResult {
  std::shared_ptr<nn::Tape> tape;
  SimilarityMatrix sim;          // post-verification
  Eigen::MatrixXd S_pre;         // pre-verification row-normalized scores
  EffectiveRank rank;
  bool registrable{false};
  RigidTransform pose_normalized;
  RigidTransform pose_raw;
  std::vector<int> provenance_src;
  std::vector<int> provenance_tar;
  // loss tensors (valid when gt requested)
  nn::Tensor loss_total;
  LossBreakdown loss;
};

ForwardResult forward_pipeline(Model& model, const PreparedPair& pair, bool training,
                               bool with_loss);

// Training: fixed pair order per epoch, one Adam step per pair.
struct EpochStats {
  double rot{0.0}, trans{0.0}, reg{0.0}, total{0.0};
};

struct Trainer {
  explicit Trainer(Model& model);
  // Runs `epochs` epochs; logs one line per epoch to `log` when non-null.
  std::vector<EpochStats> run(const std::vector<ScenePair>& pairs, int epochs,
                              std::ostream* log);
  void save_optimizer(const std::string& path) const;
  void load_optimizer(const std::string& path);

  Model& model;
  nn::Adam adam;

 private:
  std::vector<PreparedPair> cache_;
  const std::vector<ScenePair>* cached_for_{nullptr};
};

// Evaluation over a dataset; parallel over pairs (EQGS_THREADS caps workers).
struct PairReport {
  int id{0};
  PairOutcome outcome;
  double f1{0.0};
  bool registrable{false};
  int valid_rows{0};
  int effective_rank{0};
};

struct EvalReport {
  std::vector<PairReport> pairs;
  MetricReport summary;  // paper-style: RE/TE averaged over successful pairs
};

EvalReport evaluate_dataset(Model& model, const std::vector<ScenePair>& pairs);

int worker_count(int jobs);  // EQGS_THREADS cap
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace eqgs
