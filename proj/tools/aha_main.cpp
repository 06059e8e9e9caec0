#include <string>

#include "CLI11.hpp"
#include "aha/experiment.hpp"

namespace {

aha::GateForce parse_force(const std::string& s) {
  if (s == "auto") return aha::GateForce::automatic;
  if (s == "all-full") return aha::GateForce::all_full;
  return aha::GateForce::all_local;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"All-or-Here attention: train, evaluate, sweep and analyze routed toy models"};
  app.require_subcommand(1);

  std::string train_config, train_out = "out";
  auto* train = app.add_subcommand("train", "Train one model from a JSON config");
  train->add_option("--config", train_config, "experiment config (JSON)")->required();
  train->add_option("--out", train_out, "artifact directory");

  aha::EvalOptions eopt;
  std::string force_name = "auto";
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a task");
  eval->add_option("--ckpt", eopt.ckpt_path, "checkpoint path")->required();
  eval->add_option("--task", eopt.task, "counting|needle|local_lm|mixed");
  eval->add_option("--force-gates", force_name, "auto|all-full|all-local")
      ->check(CLI::IsMember({"auto", "all-full", "all-local"}));
  eval->add_option("--samples", eopt.samples, "evaluation sequences");
  eval->add_option("--seed", eopt.seed, "evaluation data seed");
  eval->add_option("--length", eopt.length, "sequence length");
  eval->add_option("--key-distance", eopt.key_distance, "needle key distance");
  eval->add_option("--order", eopt.order, "local LM Markov order");
  eval->add_option("--window", eopt.window_override,
                   "override the sliding window (warns when it differs from training)");
  eval->add_option("--out", eopt.out_json, "also write the metrics JSON here");
  eval->add_option("--traces", eopt.trace_dir, "dump gate traces into this directory");

  std::string sweep_config, sweep_axis, sweep_out = "sweep";
  int sweep_seeds = 1;
  auto* sweep = app.add_subcommand("sweep", "Train across a window or lambda axis");
  sweep->add_option("--config", sweep_config, "base experiment config (JSON)")->required();
  sweep->add_option("--axis", sweep_axis, "w=4,8,16,32 or lambda=0,0.003,0.03")->required();
  sweep->add_option("--seeds", sweep_seeds, "replicates per point (ignored when the config lists seeds)");
  sweep->add_option("--out", sweep_out, "artifact directory");

  std::string analyze_traces, analyze_out = "reports";
  auto* analyze = app.add_subcommand("analyze", "Aggregate gate traces into report files");
  analyze->add_option("--traces", analyze_traces, "directory of .ahatrace files")->required();
  analyze->add_option("--out", analyze_out, "report directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? aha::kExitOk : aha::kExitConfig;
  }

  if (*train) return aha::run_cli_action([&] { aha::run_train(train_config, train_out); });
  if (*eval) {
    eopt.force = parse_force(force_name);
    return aha::run_cli_action([&] { aha::run_eval(eopt); });
  }
  if (*sweep)
    return aha::run_cli_action(
        [&] { aha::run_sweep(sweep_config, sweep_axis, sweep_seeds, sweep_out); });
  if (*analyze)
    return aha::run_cli_action([&] { aha::run_analyze(analyze_traces, analyze_out); });
  return aha::kExitConfig;
}
