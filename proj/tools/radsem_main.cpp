// Command-line front end: simulate | preprocess | train | infer | evaluate | bench.
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric divergence.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "radsem/commands.hpp"

namespace {

radsem::RunConfig load_or_default(const std::string& config_path) {
  if (config_path.empty()) return {};
  return radsem::load_config(config_path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"radar semantic perception pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  uint64_t seed = 0;
  unsigned threads = 1;
  app.add_option("--config", config_path, "JSON config file (defaults apply when omitted)");
  app.add_option("--seed", seed, "run seed");
  app.add_option("--threads", threads, "worker thread count");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic sequence");
  std::string sim_out;
  simulate->add_option("--out", sim_out, "output directory")->required();

  // preprocess
  auto* preprocess = app.add_subcommand("preprocess", "accumulate cubes and build stage-one input");
  std::string pre_in, pre_out;
  preprocess->add_option("--in", pre_in, "simulate output directory")->required();
  preprocess->add_option("--out", pre_out, "output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "train a reference model");
  radsem::TrainOptions train_opt;
  std::string train_stage, train_data, train_out, train_s1, train_s2;
  train->add_option("--stage", train_stage, "1 | 2 | distill")->required();
  train->add_option("--data", train_data, "preprocessed sequence directory (or parent)")->required();
  train->add_option("--out", train_out, "model output path")->required();
  train->add_option("--stage1-model", train_s1, "stage-one model (stage 2 / distill)");
  train->add_option("--stage2-model", train_s2, "stage-two model (distill)");

  // infer
  auto* infer = app.add_subcommand("infer", "run the two-stage pipeline");
  std::string infer_data, infer_s1, infer_s2, infer_mode = "heun", infer_out;
  bool cheat = false;
  infer->add_option("--data", infer_data, "preprocessed sequence directory")->required();
  infer->add_option("--stage1-model", infer_s1, "stage-one model file");
  infer->add_option("--stage2-model", infer_s2, "stage-two model file");
  infer->add_option("--mode", infer_mode, "heun | consistency");
  infer->add_flag("--cheat-oracle", cheat, "test harness: ground-truth condition and denoiser");
  infer->add_option("--out", infer_out, "predicted cloud path")->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "compare predicted and ground-truth clouds");
  std::string eval_pred, eval_gt, eval_report;
  std::vector<double> eval_taus{0.25, 0.5};
  evaluate->add_option("--pred", eval_pred, "predicted cloud")->required();
  evaluate->add_option("--gt", eval_gt, "ground-truth cloud")->required();
  evaluate->add_option("--tau", eval_taus, "match thresholds in metres");
  evaluate->add_option("--report", eval_report, "report output path")->required();

  // bench
  auto* bench = app.add_subcommand("bench", "timing tables");
  std::string bench_component = "accumulate";
  std::vector<std::size_t> bench_sizes;
  std::vector<unsigned> bench_threads{1, 2, 4, 8};
  int bench_reps = 5;
  bench->add_option("--component", bench_component, "accumulate | metrics");
  bench->add_option("--sizes", bench_sizes, "workload sizes");
  bench->add_option("--bench-threads", bench_threads, "thread counts (accumulate)");
  bench->add_option("--repetitions", bench_reps, "repetitions per cell (median reported)");

  CLI11_PARSE(app, argc, argv);

  try {
    const radsem::RunConfig cfg = load_or_default(config_path);

    if (simulate->parsed()) {
      radsem::cmd_simulate(cfg, seed, threads, sim_out);
    } else if (preprocess->parsed()) {
      radsem::cmd_preprocess(pre_in, cfg, threads, pre_out);
    } else if (train->parsed()) {
      train_opt.stage = train_stage;
      train_opt.data_root = train_data;
      train_opt.model_out = train_out;
      train_opt.stage1_model = train_s1;
      train_opt.stage2_model = train_s2;
      radsem::cmd_train(train_opt, cfg, seed);
    } else if (infer->parsed()) {
      radsem::InferOptions opt;
      opt.data_dir = infer_data;
      opt.stage1_model = infer_s1;
      opt.stage2_model = infer_s2;
      if (infer_mode == "heun")
        opt.mode = radsem::SampleMode::kHeun;
      else if (infer_mode == "consistency")
        opt.mode = radsem::SampleMode::kConsistency;
      else
        throw radsem::ConfigError("infer: mode must be heun or consistency");
      opt.cheat_oracle = cheat;
      opt.out_cloud = infer_out;
      radsem::cmd_infer(opt, cfg, seed);
    } else if (evaluate->parsed()) {
      const auto result = radsem::cmd_evaluate(eval_pred, eval_gt, eval_taus, eval_report);
      std::cout << radsem::format_report(result);
    } else if (bench->parsed()) {
      if (bench_sizes.empty()) {
        // Default workload: K frames of the per-frame top-percent survivors
        // at the configured cube dims.
        const auto per_frame = static_cast<std::size_t>(
            std::ceil(double(cfg.radar.bin_count()) * cfg.per_frame_top_percent / 100.0));
        bench_sizes.push_back(per_frame * std::size_t(cfg.trajectory.frame_count));
      }
      if (bench_component == "metrics" && bench_sizes.size() == 1 && bench_sizes[0] > 200000)
        std::fprintf(stderr, "note: brute-force reference is O(n^2); this may take a while\n");
      const auto rows = radsem::cmd_bench(bench_component, bench_sizes, bench_threads, bench_reps, cfg);
      std::cout << radsem::format_bench(rows);
    }
  } catch (const radsem::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const radsem::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const radsem::DivergenceError& e) {
    std::fprintf(stderr, "divergence: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
