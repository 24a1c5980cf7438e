#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "eqgs/pipeline.hpp"
#include "eqgs/ply_io.hpp"
#include "eqgs/selfcheck.hpp"

namespace fs = std::filesystem;
using namespace eqgs;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitUnregistrable = 2;
constexpr int kExitNumeric = 3;

// config file first, then explicit flags on top
struct ConfigCli {
  std::string config_file;
  std::vector<std::string> overrides;  // key=value

  Config resolve() const {
    Config cfg;
    if (!config_file.empty()) cfg = load_config_file(config_file);
    for (const auto& kv : overrides) {
      const size_t eq = kv.find('=');
      if (eq == std::string::npos)
        throw UsageError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
  }
};

void add_config_options(CLI::App* cmd, ConfigCli& cc) {
  cmd->add_option("--config", cc.config_file, "config file (key = value lines)");
  cmd->add_option("--set", cc.overrides, "override a config key, e.g. --set num_points=256")
      ->take_all();
}

SceneConfig scene_config_of(const Config& cfg) {
  SceneConfig sc;
  sc.num_points = cfg.num_points;
  sc.overlap = cfg.overlap;
  sc.outlier = cfg.outlier;
  sc.noise_sigma = cfg.noise_sigma;
  sc.max_angle_deg = cfg.max_angle_deg;
  sc.max_translation = cfg.max_translation;
  return sc;
}

int cmd_generate(const ConfigCli& cc, const std::string& out_dir, int count) {
  const Config cfg = cc.resolve();
  const SceneConfig sc = scene_config_of(cfg);
  sc.validate();
  if (count < 1) throw UsageError("generate: count must be >= 1");

  std::vector<ScenePair> pairs(count);
  parallel_for(count, worker_count(count), [&](int i) {
    pairs[i] = generate_scene_pair(sc, nn::derive_seed(cfg.seed, static_cast<uint64_t>(i)));
  });
  save_dataset(out_dir, pairs);
  for (int i = 0; i < count; ++i)
    std::printf("pair %04d: %d points, |omega| = %zu, seed %llu\n", i, pairs[i].src.size(),
                pairs[i].gt_correspondences.size(),
                static_cast<unsigned long long>(pairs[i].seed));
  return 0;
}

int cmd_train(const ConfigCli& cc, const std::string& data_dir, const std::string& out_ckpt,
              int epochs_flag, const std::string& resume) {
  Config cfg = cc.resolve();
  const int epochs = epochs_flag >= 0 ? epochs_flag : cfg.epochs;

  auto pairs = load_dataset(data_dir);
  auto model = build_model(cfg);
  Trainer trainer(*model);
  if (!resume.empty()) {
    load_checkpoint(resume, model->store);
    const std::string opt = resume + ".opt";
    if (fs::exists(opt)) trainer.load_optimizer(opt);
  }

  const auto stats = trainer.run(pairs, epochs, &std::cout);
  std::ofstream log(out_ckpt + ".log");
  for (size_t e = 0; e < stats.size(); ++e) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "epoch %zu\tL_rot %.6f\tL_trans %.6f\tL_Reg %.6f\tL_total %.6f\n", e,
                  stats[e].rot, stats[e].trans, stats[e].reg, stats[e].total);
    log << buf;
  }
  save_checkpoint(out_ckpt, model->store);
  trainer.save_optimizer(out_ckpt + ".opt");
  std::printf("checkpoint written to %s\n", out_ckpt.c_str());
  return 0;
}

PointCloud load_cloud_for_register(const Config& cfg, const std::string& ply,
                                   const std::string& desc_file) {
  PointCloud pc = read_ply(ply);
  if (cfg.voxel > 0.0) pc = voxel_downsample(pc, cfg.voxel);
  pc = order_by_ray_length(pc);
  if (pc.size() < cfg.num_points)
    throw UsageError(ply + ": " + std::to_string(pc.size()) +
                     " points after preprocessing, need >= " + std::to_string(cfg.num_points) +
                     " (reduce voxel or num_points)");
  pc.points.resize(cfg.num_points);  // keep the num_points longest rays
  if (!desc_file.empty()) pc = ingest_descriptors(pc, desc_file);
  return pc;
}

void dump_similarity(const std::string& path, const ForwardResult& res) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write similarity dump: " + path);
  char buf[64];
  for (int i = 0; i < res.sim.size(); ++i) {
    for (int j = 0; j < res.sim.size(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g%c", res.sim.S(i, j),
                    j + 1 == res.sim.size() ? '\n' : ',');
      out << buf;
    }
  }
  out << "# row_valid";
  for (int i = 0; i < res.sim.size(); ++i) out << ' ' << (res.sim.row_valid[i] ? 1 : 0);
  out << '\n';
}

int cmd_register(const ConfigCli& cc, const std::string& ckpt, const std::string& src_ply,
                 const std::string& tar_ply, const std::string& src_desc,
                 const std::string& tar_desc, const std::string& dump_sim) {
  const Config cfg = cc.resolve();
  auto model = build_model(cfg);
  load_checkpoint(ckpt, model->store);

  const PointCloud src = load_cloud_for_register(cfg, src_ply, src_desc);
  const PointCloud tar = load_cloud_for_register(cfg, tar_ply, tar_desc);

  PreparedPair prep = prepare_pair(cfg, src, tar);
  ForwardResult res = forward_pipeline(*model, prep, /*training=*/false, /*with_loss=*/false);
  if (!dump_sim.empty()) dump_similarity(dump_sim, res);
  if (!res.registrable) {
    std::fprintf(stderr,
                 "unregistrable pair: %d valid similarity rows, effective rank %d (minimum %d)\n",
                 res.sim.valid_count(), res.rank.rank, cfg.min_rank);
    return kExitUnregistrable;
  }

  auto print_pose = [](const char* label, const RigidTransform& t) {
    std::printf("%s %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", label, t.rotation.w(),
                t.rotation.x(), t.rotation.y(), t.rotation.z(), t.translation.x(),
                t.translation.y(), t.translation.z());
  };
  print_pose("normalized", res.pose_normalized);
  print_pose("raw", res.pose_raw);
  return 0;
}

int cmd_eval(const ConfigCli& cc, const std::string& ckpt, const std::string& data_dir,
             const std::string& report_path, const std::string& per_pair_path) {
  const Config cfg = cc.resolve();
  auto model = build_model(cfg);
  load_checkpoint(ckpt, model->store);

  auto pairs = load_dataset(data_dir);
  const auto t0 = std::chrono::steady_clock::now();
  EvalReport report = evaluate_dataset(*model, pairs);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report.summary.runtime_s = secs / static_cast<double>(pairs.size());

  const std::string tsv = metric_report_tsv({{cfg.profile, report.summary}});
  std::fputs(tsv.c_str(), stdout);
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    out << tsv;
  }
  if (!per_pair_path.empty()) {
    std::ofstream out(per_pair_path);
    out << "id,re_deg,te,delta,rmse,f1,registrable,valid_rows,effective_rank,success\n";
    char buf[256];
    for (const auto& pr : report.pairs) {
      std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%d,%d,%d,%d\n", pr.id,
                    rad_to_deg(pr.outcome.re_rad), pr.outcome.te, pr.outcome.delta,
                    pr.outcome.rmse, pr.f1, pr.registrable ? 1 : 0, pr.valid_rows,
                    pr.effective_rank, pr.outcome.success ? 1 : 0);
      out << buf;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"equivariant graph registration pipeline"};
  app.require_subcommand(1);

  ConfigCli gen_cc, train_cc, reg_cc, eval_cc;
  std::string out_dir, data_dir, ckpt, src_ply, tar_ply, src_desc, tar_desc;
  std::string report_path, per_pair_path, dump_sim, resume;
  int count = 1;
  int epochs_flag = -1;

  auto* generate = app.add_subcommand("generate", "generate a synthetic dataset");
  add_config_options(generate, gen_cc);
  generate->add_option("--out", out_dir, "output directory")->required();
  generate->add_option("--count", count, "number of pairs")->required();

  auto* train = app.add_subcommand("train", "train on a dataset");
  add_config_options(train, train_cc);
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--out", ckpt, "output checkpoint path")->required();
  train->add_option("--epochs", epochs_flag, "override config epochs");
  train->add_option("--resume", resume, "checkpoint to resume from");

  auto* reg = app.add_subcommand("register", "register a source scan onto a target scan");
  add_config_options(reg, reg_cc);
  reg->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
  reg->add_option("--src", src_ply, "source PLY")->required();
  reg->add_option("--tar", tar_ply, "target PLY")->required();
  reg->add_option("--src-desc", src_desc, "EQDF descriptors for the source");
  reg->add_option("--tar-desc", tar_desc, "EQDF descriptors for the target");
  reg->add_option("--dump-similarity", dump_sim, "write the similarity matrix as CSV");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  add_config_options(eval, eval_cc);
  eval->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--report", report_path, "write the TSV metric table here");
  eval->add_option("--per-pair", per_pair_path, "write per-pair CSV here");

  auto* selfcheck = app.add_subcommand("selfcheck", "run the property suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? kExitUsage : 0;
  }

  try {
    if (generate->parsed()) return cmd_generate(gen_cc, out_dir, count);
    if (train->parsed()) return cmd_train(train_cc, data_dir, ckpt, epochs_flag, resume);
    if (reg->parsed())
      return cmd_register(reg_cc, ckpt, src_ply, tar_ply, src_desc, tar_desc, dump_sim);
    if (eval->parsed()) return cmd_eval(eval_cc, ckpt, data_dir, report_path, per_pair_path);
    if (selfcheck->parsed()) return run_selfcheck(std::cout) ? 0 : kExitNumeric;
  } catch (const UnregistrableError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUnregistrable;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumeric;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return 0;
}
