#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "radsem/config.hpp"
#include "radsem/io.hpp"
#include "radsem/metrics.hpp"
#include "radsem/pipeline.hpp"

// Subcommand implementations. The CLI binary is a thin argv wrapper around
// these so integration tests can drive the same code paths in-process.

namespace radsem {

namespace fs = std::filesystem;

inline double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

inline constexpr const char* kVersion = "0.1.0";

// Run metadata written at the end of every subcommand, including failed
// ones (then with a non-empty error field). The write goes through a
// temporary file and an atomic rename.
struct RunManifest {
  std::string command;
  uint64_t config_hash = 0;
  uint64_t seed = 0;
  unsigned threads = 1;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::map<std::string, double> timings_ms;
  std::map<std::string, double> stats;
  std::string error;
};

inline void write_manifest(const RunManifest& m, const fs::path& path) {
  nlohmann::json j;
  j["command"] = m.command;
  j["config_hash"] = m.config_hash;
  j["seed"] = m.seed;
  j["threads"] = m.threads;
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  j["timings_ms"] = m.timings_ms;
  j["stats"] = m.stats;
  j["error"] = m.error;
  j["version"] = kVersion;
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw DataError("cannot write manifest: " + tmp.string());
    out << j.dump(2) << "\n";
  }
  fs::rename(tmp, path);
}

namespace cmddetail {

inline std::string frame_name(const char* prefix, int i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03d.%s", prefix, i, ext);
  return buf;
}

// Runs body, then writes the manifest whether or not body threw.
template <typename Body>
void with_manifest(RunManifest& manifest, const fs::path& manifest_path, Body&& body) {
  const double t0 = now_ms();
  try {
    body();
  } catch (const std::exception& e) {
    manifest.error = e.what();
    manifest.timings_ms["total"] = now_ms() - t0;
    write_manifest(manifest, manifest_path);
    throw;
  }
  manifest.timings_ms["total"] = now_ms() - t0;
  write_manifest(manifest, manifest_path);
}

inline std::vector<fs::path> sequence_dirs(const fs::path& root) {
  if (fs::exists(root / "stage1_input.svxt")) return {root};
  std::vector<fs::path> dirs;
  if (!fs::is_directory(root)) throw DataError("not a directory: " + root.string());
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory() && fs::exists(entry.path() / "stage1_input.svxt"))
      dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw DataError("no preprocessed sequences under " + root.string());
  return dirs;
}

inline int current_frame_index(const fs::path& dir) {
  const auto poses = load_poses(dir / "poses.txt");
  return static_cast<int>(poses.size()) - 1;
}

// Ground-truth voxel labels of the current frame on the shared grid.
inline SparseVoxelTensor load_gt_voxel_labels(const fs::path& dir, const GridSpec& grid) {
  const int current = current_frame_index(dir);
  const SemanticPointCloud gt = load_point_cloud(dir / frame_name("gt", current, "txt"));
  std::vector<float> codes(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i)
    codes[i] = static_cast<float>(static_cast<uint8_t>(gt.labels[i]));
  return voxelize(gt.points, codes, 1, grid, Reduce::kMajority);
}

struct SequenceData {
  SparseVoxelTensor input;   // stage-one input, C=2
  StageOneTarget target;     // stage-one supervision
  SparseVoxelTensor gt_labels;  // C=1 class codes on the grid
};

inline SequenceData load_sequence(const fs::path& dir, const RunConfig& cfg) {
  SequenceData data;
  data.input = load_tensor(dir / "stage1_input.svxt");
  const int current = current_frame_index(dir);
  const SemanticPointCloud gt = load_point_cloud(dir / frame_name("gt", current, "txt"));
  const auto structural = build_structural_target(gt, data.input.spec(), cfg.kernel);
  const auto semantic = build_semantic_target(gt, data.input.spec(), cfg.kernel);
  data.target = assemble_stage1_target(structural, semantic, data.input);
  data.gt_labels = load_gt_voxel_labels(dir, data.input.spec());
  return data;
}

inline Stage2Example make_stage2_example(const SequenceData& seq,
                                         const ReferenceStage1Predictor& stage1) {
  const StageOnePrediction pred = stage1.evaluate(seq.input);
  const ConditionMatrix cond =
      build_condition(pred.structural, pred.semantic, seq.input.indices(), seq.input.spec());
  const StageTwoSample sample =
      expand_stage2_sample(seq.gt_labels, seq.input.spec(), cond.support);
  Stage2Example ex;
  ex.x = sample.x.cast<double>();
  ex.condition = expand_condition_features(cond.features);
  return ex;
}

inline void write_loss_log(const fs::path& path, const TrainReport& report) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write training log: " + path.string());
  for (std::size_t i = 0; i < report.losses.size(); ++i)
    out << i << " " << report.losses[i] << "\n";
}

}  // namespace cmddetail

// --- simulate ----------------------------------------------------------------

inline void cmd_simulate(const RunConfig& cfg, uint64_t seed, unsigned threads,
                         const fs::path& out_dir) {
  fs::create_directories(out_dir);
  RunManifest manifest;
  manifest.command = "simulate";
  manifest.config_hash = config_hash(cfg);
  manifest.seed = seed;
  manifest.threads = threads;

  cmddetail::with_manifest(manifest, out_dir / "manifest_simulate.json", [&] {
    double t = now_ms();
    const Scene scene = generate_scene(cfg.scene, seed);
    const std::vector<PoseSE3> poses = generate_trajectory(cfg.trajectory, hash_mix(seed, 1));
    manifest.timings_ms["scene"] = now_ms() - t;
    manifest.stats["scatterers"] = double(scene.scatterers.size());
    manifest.stats["frames"] = double(poses.size());

    t = now_ms();
    for (std::size_t i = 0; i < poses.size(); ++i) {
      const SphericalCube cube =
          synthesize_spherical_cube(scene, poses[i], cfg.radar, hash_mix(seed, 100 + i), threads);
      const fs::path path = out_dir / cmddetail::frame_name("cube", int(i), "rscb");
      save_cube(cube, path);
      manifest.outputs.push_back(path.string());
    }
    manifest.timings_ms["cubes"] = now_ms() - t;

    t = now_ms();
    for (std::size_t i = 0; i < poses.size(); ++i) {
      const SemanticPointCloud gt =
          render_lidar(scene, poses[i], cfg.fov, hash_mix(seed, 200 + i), cfg.lidar_jitter_sigma_m);
      const fs::path path = out_dir / cmddetail::frame_name("gt", int(i), "txt");
      save_point_cloud(gt, path);
      manifest.outputs.push_back(path.string());
    }
    manifest.timings_ms["lidar"] = now_ms() - t;

    save_poses(poses, out_dir / "poses.txt");
    manifest.outputs.push_back((out_dir / "poses.txt").string());
  });
}

// --- preprocess ---------------------------------------------------------------

inline void cmd_preprocess(const fs::path& in_dir, const RunConfig& cfg, unsigned threads,
                           const fs::path& out_dir) {
  fs::create_directories(out_dir);
  RunManifest manifest;
  manifest.command = "preprocess";
  manifest.config_hash = config_hash(cfg);
  manifest.threads = threads;

  cmddetail::with_manifest(manifest, out_dir / "manifest_preprocess.json", [&] {
    const std::vector<PoseSE3> poses = load_poses(in_dir / "poses.txt");
    manifest.inputs.push_back((in_dir / "poses.txt").string());
    std::vector<SphericalCube> cubes;
    for (std::size_t i = 0; i < poses.size(); ++i) {
      const fs::path path = in_dir / cmddetail::frame_name("cube", int(i), "rscb");
      cubes.push_back(load_cube(path));
      manifest.inputs.push_back(path.string());
    }

    const PreprocessConfig pcfg = cfg.preprocess_config();

    double t = now_ms();
    const SparseVoxelTensor rcc = accumulate_frames(cubes, poses, pcfg, threads);
    manifest.timings_ms["accumulate"] = now_ms() - t;
    manifest.stats["rcc_voxels"] = double(rcc.rows());

    t = now_ms();
    std::vector<std::vector<CfarDetection>> detections(cubes.size());
    for (std::size_t i = 0; i < cubes.size(); ++i)
      detections[i] = ca_cfar(cubes[i], cfg.cfar, threads);
    manifest.timings_ms["cfar"] = now_ms() - t;

    t = now_ms();
    const SparseVoxelTensor rpc = build_rpc(detections, cubes.back().config, poses, pcfg);
    manifest.timings_ms["rpc"] = now_ms() - t;
    manifest.stats["rpc_voxels"] = double(rpc.rows());

    const SparseVoxelTensor input = assemble_stage1_input(rcc, rpc);
    save_tensor(rcc, out_dir / "rcc.svxt");
    save_tensor(rpc, out_dir / "rpc.svxt");
    save_tensor(input, out_dir / "stage1_input.svxt");
    for (const char* name : {"rcc.svxt", "rpc.svxt", "stage1_input.svxt"})
      manifest.outputs.push_back((out_dir / name).string());
  });
}

// --- train --------------------------------------------------------------------

struct TrainOptions {
  std::string stage;  // "1", "2", or "distill"
  fs::path data_root;
  fs::path model_out;
  fs::path stage1_model;  // required by stage 2 and distill
  fs::path stage2_model;  // required by distill
};

inline void cmd_train(const TrainOptions& opt, const RunConfig& cfg, uint64_t seed) {
  RunManifest manifest;
  manifest.command = "train";
  manifest.config_hash = config_hash(cfg);
  manifest.seed = seed;
  fs::create_directories(opt.model_out.parent_path().empty() ? "." : opt.model_out.parent_path());
  const fs::path manifest_path = opt.model_out.string() + ".manifest.json";

  cmddetail::with_manifest(manifest, manifest_path, [&] {
    const auto dirs = cmddetail::sequence_dirs(opt.data_root);
    for (const auto& d : dirs) manifest.inputs.push_back(d.string());

    std::vector<cmddetail::SequenceData> sequences;
    sequences.reserve(dirs.size());
    for (const auto& d : dirs) sequences.push_back(cmddetail::load_sequence(d, cfg));

    TrainReport report;
    if (opt.stage == "1") {
      std::vector<std::pair<SparseVoxelTensor, StageOneTarget>> data;
      for (auto& s : sequences) data.emplace_back(s.input, s.target);
      ReferenceStage1Predictor model(seed);
      Stage1TrainConfig tcfg = cfg.stage1;
      tcfg.seed = seed;
      report = model.train(data, tcfg);
      save_stage1_model(model, opt.model_out);
    } else if (opt.stage == "2") {
      if (opt.stage1_model.empty()) throw ConfigError("train stage 2 needs --stage1-model");
      const ReferenceStage1Predictor stage1 = load_stage1_model(opt.stage1_model);
      std::vector<Stage2Example> data;
      for (const auto& s : sequences) data.push_back(cmddetail::make_stage2_example(s, stage1));
      RowwiseDenoiserConfig dcfg;
      dcfg.condition_cols = kConditionFeatureCols;
      dcfg.hidden = cfg.stage2_hidden;
      dcfg.fourier_features = cfg.stage2_fourier_features;
      dcfg.seed = seed;
      RowwiseDenoiser model(dcfg);
      Stage2TrainConfig tcfg = cfg.stage2;
      tcfg.seed = seed;
      report = train_stage2_denoiser(model, data, cfg.schedule, tcfg);
      save_denoiser_model(model, opt.model_out);
    } else if (opt.stage == "distill") {
      if (opt.stage1_model.empty()) throw ConfigError("distillation needs --stage1-model");
      if (opt.stage2_model.empty()) throw ConfigError("distillation needs --stage2-model");
      const ReferenceStage1Predictor stage1 = load_stage1_model(opt.stage1_model);
      const RowwiseDenoiser teacher = load_denoiser_model(opt.stage2_model);
      std::vector<Stage2Example> data;
      for (const auto& s : sequences) data.push_back(cmddetail::make_stage2_example(s, stage1));
      RowwiseDenoiser student = teacher;  // same parameterization at init
      DistillConfig dcfg = cfg.distill;
      dcfg.seed = seed;
      report = consistency_distill(student, teacher, data, cfg.schedule, dcfg);
      save_denoiser_model(student, opt.model_out);
    } else {
      throw ConfigError("train: stage must be 1, 2, or distill");
    }

    cmddetail::write_loss_log(opt.model_out.string() + ".log", report);
    manifest.outputs.push_back(opt.model_out.string());
    manifest.stats["initial_loss"] = report.initial_loss;
    manifest.stats["final_loss"] = report.final_loss;
    manifest.stats["steps"] = double(report.losses.size());
  });
}

// --- infer --------------------------------------------------------------------

struct InferOptions {
  fs::path data_dir;
  fs::path stage1_model;
  fs::path stage2_model;  // EDM or distilled, matching `mode`
  SampleMode mode = SampleMode::kHeun;
  bool cheat_oracle = false;  // test harness: GT-derived condition + oracle denoiser
  fs::path out_cloud;
};

inline void cmd_infer(const InferOptions& opt, const RunConfig& cfg, uint64_t seed) {
  RunManifest manifest;
  manifest.command = "infer";
  manifest.config_hash = config_hash(cfg);
  manifest.seed = seed;
  fs::create_directories(opt.out_cloud.parent_path().empty() ? "." : opt.out_cloud.parent_path());
  const fs::path manifest_path = opt.out_cloud.string() + ".manifest.json";

  cmddetail::with_manifest(manifest, manifest_path, [&] {
    const SparseVoxelTensor input = load_tensor(opt.data_dir / "stage1_input.svxt");
    manifest.inputs.push_back((opt.data_dir / "stage1_input.svxt").string());

    ConditionMatrix condition;
    std::unique_ptr<DenoiserInterface> denoiser;

    double t = now_ms();
    if (opt.cheat_oracle) {
      const SparseVoxelTensor gt_labels =
          cmddetail::load_gt_voxel_labels(opt.data_dir, input.spec());
      const StageTwoSample sample =
          expand_stage2_sample(gt_labels, input.spec(), input.indices());
      condition = condition_from_ground_truth(sample);

      FeatureMatrix x_star = FeatureMatrix::Zero(condition.rows(), kClassCount);
      for (Eigen::Index r = 0; r < x_star.rows(); ++r)
        x_star(r, int(condition.features(r, 1))) = 1.0;
      denoiser = std::make_unique<CheatOracleDenoiser>(std::move(x_star), cfg.schedule.sigma_data);

      // Reference cloud for plumbing checks: ground truth restricted to the
      // conditional support.
      SemanticPointCloud gt_on_support;
      for (Eigen::Index r = 0; r < condition.features.rows(); ++r)
        gt_on_support.push_back(
            input.spec().voxel_center(condition.support[r]).cast<float>(),
            static_cast<ClassLabel>(int(condition.features(r, 1))));
      const fs::path ref_path = opt.out_cloud.parent_path() / "gt_on_support.txt";
      save_point_cloud(gt_on_support, ref_path);
      manifest.outputs.push_back(ref_path.string());
    } else {
      if (opt.stage1_model.empty() || opt.stage2_model.empty())
        throw ConfigError("infer needs --stage1-model and --stage2-model");
      const ReferenceStage1Predictor stage1 = load_stage1_model(opt.stage1_model);
      const StageOnePrediction pred = stage1.evaluate(input);
      condition = build_condition(pred.structural, pred.semantic, input.indices(), input.spec());
      denoiser = std::make_unique<RowwiseDenoiser>(load_denoiser_model(opt.stage2_model));
    }
    manifest.timings_ms["stage1"] = now_ms() - t;
    manifest.stats["condition_rows"] = double(condition.rows());

    t = now_ms();
    Rng rng(seed);
    std::size_t evaluations = 0;
    const SemanticPointCloud cloud =
        stage2_generate(*denoiser, condition, cfg.schedule, opt.mode, rng, &evaluations);
    manifest.timings_ms["stage2"] = now_ms() - t;
    manifest.stats["denoiser_evaluations"] = double(evaluations);
    manifest.stats["schedule_steps"] = double(cfg.schedule.n_steps);
    manifest.stats["points"] = double(cloud.size());

    save_point_cloud(cloud, opt.out_cloud);
    manifest.outputs.push_back(opt.out_cloud.string());
  });
}

// --- evaluate -----------------------------------------------------------------

struct TauReport {
  double tau = 0.0;
  MatchCounts counts;
  PrfIou ratios;
  std::optional<double> chamfer_m;
  MiouResult semantic;
};

struct EvaluateResult {
  std::vector<TauReport> per_tau;
};

inline EvaluateResult evaluate_clouds(const SemanticPointCloud& pred,
                                      const SemanticPointCloud& gt,
                                      std::span<const double> taus) {
  EvaluateResult result;
  for (double tau : taus) {
    TauReport report;
    report.tau = tau;
    report.counts = match_counts(pred.points, gt.points, tau);
    report.ratios = prf_iou(report.counts);
    if (!pred.empty() && !gt.empty()) report.chamfer_m = chamfer(pred.points, gt.points, tau);
    report.semantic = miou(pred, gt, tau);
    result.per_tau.push_back(std::move(report));
  }
  return result;
}

// Structured records, one "metric tau class value" line each, plus a short
// summary table.
inline std::string format_report(const EvaluateResult& result) {
  std::string out;
  char line[160];
  auto emit = [&](const char* metric, double tau, const std::string& cls, double value) {
    std::snprintf(line, sizeof(line), "%s %.3g %s %.6g\n", metric, tau, cls.c_str(), value);
    out += line;
  };
  auto emit_opt = [&](const char* metric, double tau, const std::string& cls,
                      std::optional<double> value) {
    if (value)
      emit(metric, tau, cls, *value);
    else {
      std::snprintf(line, sizeof(line), "%s %.3g %s undefined\n", metric, tau, cls.c_str());
      out += line;
    }
  };

  for (const auto& r : result.per_tau) {
    emit("tp", r.tau, "all", double(r.counts.tp));
    emit("fp", r.tau, "all", double(r.counts.fp));
    emit("fn", r.tau, "all", double(r.counts.fn));
    emit_opt("precision", r.tau, "all", r.ratios.precision);
    emit_opt("recall", r.tau, "all", r.ratios.recall);
    emit_opt("iou", r.tau, "all", r.ratios.iou);
    emit_opt("chamfer", r.tau, "all", r.chamfer_m);
    for (const auto& [cls, iou] : r.semantic.per_class) emit("class_iou", r.tau, class_name(cls), iou);
    emit_opt("miou", r.tau, "all", r.semantic.mean);
  }

  out += "\n# tau      iou    precision   recall   chamfer     miou\n";
  for (const auto& r : result.per_tau) {
    auto cell = [](std::optional<double> v) {
      char buf[16];
      if (v)
        std::snprintf(buf, sizeof(buf), "%8.4f", *v);
      else
        std::snprintf(buf, sizeof(buf), "%8s", "n/a");
      return std::string(buf);
    };
    std::snprintf(line, sizeof(line), "# %.3g %s %s %s %s %s\n", r.tau, cell(r.ratios.iou).c_str(),
                  cell(r.ratios.precision).c_str(), cell(r.ratios.recall).c_str(),
                  cell(r.chamfer_m).c_str(), cell(r.semantic.mean).c_str());
    out += line;
  }
  return out;
}

inline EvaluateResult cmd_evaluate(const fs::path& pred_path, const fs::path& gt_path,
                                   std::span<const double> taus, const fs::path& report_path) {
  const SemanticPointCloud pred = load_point_cloud(pred_path);
  const SemanticPointCloud gt = load_point_cloud(gt_path);
  const EvaluateResult result = evaluate_clouds(pred, gt, taus);
  std::ofstream out(report_path);
  if (!out) throw DataError("cannot write report: " + report_path.string());
  out << format_report(result);
  return result;
}

// --- bench --------------------------------------------------------------------

struct BenchRow {
  std::string component;
  std::size_t size = 0;
  unsigned threads = 0;
  double median_ms = 0.0;
};

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// Wall-time table for the accumulation kernel and the metric queries;
// medians over `repetitions` runs.
inline std::vector<BenchRow> cmd_bench(const std::string& component,
                                       std::span<const std::size_t> sizes,
                                       std::span<const unsigned> thread_list, int repetitions,
                                       const RunConfig& cfg) {
  if (repetitions < 1) throw ConfigError("bench: repetitions must be >= 1");
  std::vector<BenchRow> rows;

  if (component == "accumulate") {
    for (std::size_t n : sizes) {
      Rng rng(123);
      std::vector<VoxelIndex> indices(n);
      std::vector<float> values(n);
      for (std::size_t i = 0; i < n; ++i) {
        indices[i] = {uint32_t(rng.below(cfg.grid.dims[0])), uint32_t(rng.below(cfg.grid.dims[1])),
                      uint32_t(rng.below(cfg.grid.dims[2]))};
        values[i] = float(rng.uniform01());
      }
      for (unsigned t : thread_list) {
        std::vector<double> times;
        for (int rep = 0; rep < repetitions; ++rep) {
          const double t0 = now_ms();
          const auto out = parallel_index_accumulate(indices, values, cfg.grid, t);
          times.push_back(now_ms() - t0);
          if (out.rows() == 0) throw std::logic_error("bench: empty accumulation");
        }
        rows.push_back({"accumulate", n, t, median(times)});
      }
    }
  } else if (component == "metrics") {
    for (std::size_t n : sizes) {
      Rng rng(321);
      std::vector<Eigen::Vector3f> a(n), b(n);
      for (std::size_t i = 0; i < n; ++i) {
        a[i] = {float(rng.uniform(4, 40)), float(rng.uniform(-20, 20)), float(rng.uniform(-20, 10))};
        b[i] = {float(rng.uniform(4, 40)), float(rng.uniform(-20, 20)), float(rng.uniform(-20, 10))};
      }
      std::vector<double> indexed, bruteforce;
      for (int rep = 0; rep < repetitions; ++rep) {
        double t0 = now_ms();
        (void)match_counts(a, b, 0.5);
        indexed.push_back(now_ms() - t0);
        t0 = now_ms();
        (void)brute::match_counts(a, b, 0.5);
        bruteforce.push_back(now_ms() - t0);
      }
      rows.push_back({"metrics_indexed", n, 1, median(indexed)});
      rows.push_back({"metrics_brute", n, 1, median(bruteforce)});
    }
  } else {
    throw ConfigError("bench: component must be accumulate or metrics");
  }
  return rows;
}

inline std::string format_bench(std::span<const BenchRow> rows) {
  std::string out = "component size threads median_ms\n";
  char line[128];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%s %zu %u %.3f\n", r.component.c_str(), r.size, r.threads,
                  r.median_ms);
    out += line;
  }
  return out;
}

}  // namespace radsem
