#pragma once

#include <cstdint>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "aha/analysis.hpp"
#include "aha/checkpoint.hpp"
#include "aha/errors.hpp"
#include "aha/model.hpp"
#include "aha/tasks.hpp"
#include "aha/training.hpp"
#include "json.hpp"

// Experiment plumbing behind the command-line interface: strict JSON configs,
// precision dispatch, evaluation, and the train/eval/sweep/analyze drivers.

namespace aha {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;   // bad config file or flags
inline constexpr int kExitRuntime = 3;  // IO or internal failure
inline constexpr int kExitNumeric = 4;  // NaN/Inf abort during compute

enum class Precision { f32, f64 };

// Reads AHA_PRECISION ({f32, f64}, default f64).
Precision precision_from_env();

struct TaskMixConfig {
  std::vector<double> mix = {1.0 / 3, 1.0 / 3, 1.0 / 3};  // counting, needle, local_lm
  int length = 48;
  int key_distance = 24;
  int order = 1;
  std::uint64_t table_seed = 1000;

  void validate() const;
};

// One experiment: everything a run needs, reproducible from the single seed
// (sub-streams are derived by name for init, training data and eval data).
struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  TaskMixConfig task;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;  // sweep replicates; empty -> derived from seed
  int eval_samples = 64;

  void validate() const;
};

// Strict parsing: unknown keys are rejected with their JSON pointer path.
ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);
nlohmann::json resolved_config_json(const ExperimentConfig& cfg);

// Weighted task stream for a named preset (counting|needle|local_lm|mixed).
std::vector<double> task_weights(const std::string& task_name);

// Child stream seeded from (seed, purpose) so train and eval data never alias.
tasks::MixedStream make_stream(const TaskMixConfig& task, std::uint64_t seed,
                               std::string_view purpose, const std::vector<double>& weights);

struct EvalSummary {
  double loss = 0.0;      // mean NLL per scored token
  double accuracy = 0.0;  // argmax match rate over scored tokens
  std::int64_t scored = 0;
  UsageReport usage;
  std::vector<GateTrace> traces;
};

// Runs `samples` sequences through the model without building backward graphs
// and aggregates losses, accuracy and gate usage.
template <class T>
EvalSummary evaluate(ModelParams<T>& params, const ModelConfig& mcfg,
                     const std::function<tasks::TaskSample()>& next_sample, int samples,
                     GateForce force = GateForce::automatic) {
  if (samples < 1) throw config_error("evaluate: samples must be positive");
  params.set_requires_grad(false);
  EvalSummary out;
  double nll_sum = 0.0;
  std::int64_t correct = 0;
  for (int s = 0; s < samples; ++s) {
    const auto sample = next_sample();
    const auto n = static_cast<std::int64_t>(sample.tokens.size());
    if (n < 2) throw shape_error("evaluate: sample too short");
    std::span<const int> inputs(sample.tokens.data(), static_cast<std::size_t>(n - 1));
    std::span<const int> targets(sample.tokens.data() + 1, static_cast<std::size_t>(n - 1));
    std::span<const std::uint8_t> mask(sample.loss_mask.data() + 1,
                                       static_cast<std::size_t>(n - 1));
    auto fwd = forward(params, mcfg, inputs, force);
    const double sample_ce =
        static_cast<double>(cross_entropy_logits(fwd.logits, targets, mask).item());

    const auto& logits = fwd.logits.data();
    const int vocab = mcfg.vocab;
    std::int64_t scored_here = 0;
    for (std::int64_t i = 0; i < n - 1; ++i) {
      if (!mask[static_cast<std::size_t>(i)]) continue;
      ++scored_here;
      int best = 0;
      const T* row = logits.data() + i * vocab;
      for (int v = 1; v < vocab; ++v)
        if (row[v] > row[best]) best = v;
      if (best == targets[static_cast<std::size_t>(i)]) ++correct;
    }
    // Per-sample CE is a mean over that sample's scored tokens; reweight so
    // the aggregate is the per-token mean across the whole evaluation set.
    nll_sum += sample_ce * static_cast<double>(scored_here);
    out.scored += scored_here;
    auto trace = make_trace(fwd.gate_traces, sample.task, s);
    trace.tokens.assign(inputs.begin(), inputs.end());
    trace.scored.assign(mask.begin(), mask.end());
    out.traces.push_back(std::move(trace));
  }
  out.loss = out.scored > 0 ? nll_sum / static_cast<double>(out.scored) : 0.0;
  out.accuracy = out.scored > 0 ? static_cast<double>(correct) / static_cast<double>(out.scored)
                                : 0.0;
  out.usage = usage_report(out.traces);
  return out;
}

nlohmann::json eval_summary_json(const EvalSummary& s, const std::string& task,
                                 GateForce force, int samples);

struct EvalOptions {
  std::string ckpt_path;
  std::string task = "mixed";
  GateForce force = GateForce::automatic;
  int samples = 64;
  std::uint64_t seed = 0;
  int length = 48;
  int key_distance = 24;
  int order = 1;
  int window_override = 0;  // 0: keep the checkpoint's window
  std::string out_json;     // optional file copy of the metrics
  std::string trace_dir;    // optional .ahatrace dump
};

struct SweepAxis {
  enum class Kind { window, lambda } kind = Kind::window;
  std::vector<double> values;
};

// Parses "w=4,8,16,32" or "lambda=0,0.003,0.01".
SweepAxis parse_axis(const std::string& spec);

// Command drivers. Each throws aha errors; callers map them to exit codes.
void run_train(const std::string& config_path, const std::string& out_dir);
void run_eval(const EvalOptions& opt);
void run_sweep(const std::string& config_path, const std::string& axis_spec, int seed_count,
               const std::string& out_dir);
void run_analyze(const std::string& trace_dir, const std::string& out_dir);

// Maps thrown errors onto the documented exit codes.
template <class F>
int run_cli_action(F&& action) {
  try {
    action();
    return kExitOk;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const numeric_error& e) {
    std::cerr << "numeric abort: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace aha
