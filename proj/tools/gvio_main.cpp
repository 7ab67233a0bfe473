#include <CLI11.hpp>

#include "gvio/app.hpp"

int main(int argc, char** argv) {
  CLI::App app{"GNSS-visual-inertial fusion: simulate, run, evaluate"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "dataset";
  int64_t seed = -1;
  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  sim->add_option("--config", config_path, "scenario key=value file");
  sim->add_option("--out", out_dir, "output directory");
  sim->add_option("--seed", seed, "seed override");

  std::string dataset_dir, run_config, run_out = "run", gating, mode = "fused";
  auto* run = app.add_subcommand("run", "run the estimator on a dataset");
  run->add_option("--dataset", dataset_dir, "dataset directory")->required();
  run->add_option("--config", run_config, "estimator key=value file");
  run->add_option("--out", run_out, "output directory");
  run->add_option("--gating", gating, "noisy-measurement removal: gnss|mixed");
  run->add_option("--mode", mode, "fused|vio|spp");

  std::string est_path, gt_path, out_csv, label;
  auto* eval = app.add_subcommand("evaluate", "compare a trajectory against ground truth");
  eval->add_option("--estimate", est_path, "estimated trajectory (TUM)")->required();
  eval->add_option("--gt", gt_path, "ground-truth trajectory (TUM)")->required();
  eval->add_option("--out", out_csv, "append metrics CSV here");
  eval->add_option("--label", label, "row label");

  CLI11_PARSE(app, argc, argv);

  if (sim->parsed()) return gvio::cmd_simulate(config_path, out_dir, seed);
  if (run->parsed()) return gvio::cmd_run(dataset_dir, run_config, run_out, gating, mode);
  if (eval->parsed()) return gvio::cmd_evaluate(est_path, gt_path, out_csv, label);
  return 1;
}
