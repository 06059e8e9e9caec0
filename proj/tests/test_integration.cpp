// Trained-model behavior: small end-to-end runs checking that the routed
// architecture separates local from global work the way the synthetic tasks
// are designed to force.

#include <algorithm>
#include <cmath>
#include <vector>

#include "aha/analysis.hpp"
#include "aha/experiment.hpp"
#include "aha/model.hpp"
#include "aha/tasks.hpp"
#include "aha/training.hpp"
#include "doctest.h"

using aha::EvalSummary;
using aha::GateForce;
using aha::ModelConfig;
using aha::TaskMixConfig;
using aha::TrainConfig;

namespace {

aha::ModelParams<double> train_model(const ModelConfig& mcfg, const TrainConfig& tcfg,
                                     const TaskMixConfig& task,
                                     const std::vector<double>& weights,
                                     GateForce force = GateForce::automatic) {
  auto stream = aha::make_stream(task, tcfg.seed, "train-data", weights);
  return aha::train<double>(mcfg, tcfg, [&stream] { return stream.next(); }, {}, force)
      .params;
}

EvalSummary eval_model(aha::ModelParams<double>& params, const ModelConfig& mcfg,
                       const TaskMixConfig& task, const std::vector<double>& weights,
                       std::uint64_t seed, int samples,
                       GateForce force = GateForce::automatic) {
  auto stream = aha::make_stream(task, seed, "eval-data", weights);
  return aha::evaluate(params, mcfg, [&stream] { return stream.next(); }, samples, force);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_CASE("a wide local window is enough to master counting") {
  ModelConfig mcfg;
  mcfg.vocab = 64;
  mcfg.d = 32;
  mcfg.layers = 2;
  mcfg.heads = 2;
  mcfg.window = 16;
  mcfg.max_seq_len = 40;
  mcfg.seed = 3;
  TrainConfig tcfg;
  tcfg.seed = 3;
  tcfg.lambda = 0.0;
  tcfg.lr = 2e-3;
  tcfg.steps = 1600;
  tcfg.batch_size = 4;
  TaskMixConfig task;
  task.length = 36;

  auto weights = aha::task_weights("counting");
  auto params = train_model(mcfg, tcfg, task, weights, GateForce::all_local);
  auto ev = eval_model(params, mcfg, task, weights, 30, 32, GateForce::all_local);
  CHECK(ev.accuracy > 0.9);
  CHECK(ev.usage.mu_f_overall == 0.0);
}

TEST_CASE("retrieval past the window is chance for a local-only model") {
  ModelConfig mcfg;
  mcfg.vocab = 64;
  mcfg.d = 32;
  mcfg.layers = 2;
  mcfg.heads = 2;
  mcfg.window = 2;
  mcfg.max_seq_len = 32;
  mcfg.seed = 4;
  TrainConfig tcfg;
  tcfg.seed = 4;
  tcfg.lambda = 0.0;
  tcfg.lr = 1e-3;
  tcfg.steps = 300;
  tcfg.batch_size = 4;
  TaskMixConfig task;
  task.length = 24;
  task.key_distance = 16;  // far beyond anything two window-2 hops can reach

  auto weights = aha::task_weights("needle");
  auto params = train_model(mcfg, tcfg, task, weights, GateForce::all_local);
  auto ev = eval_model(params, mcfg, task, weights, 40, 64, GateForce::all_local);
  // Sixteen value symbols: chance is 1/16; stay within twice that.
  CHECK(ev.accuracy <= 0.125);
}

TEST_CASE("full and local twins tie on a first-order process near its entropy") {
  ModelConfig mcfg;
  mcfg.vocab = 64;
  mcfg.d = 32;
  mcfg.layers = 1;
  mcfg.heads = 2;
  mcfg.window = 8;
  mcfg.max_seq_len = 40;
  mcfg.seed = 5;
  TrainConfig tcfg;
  tcfg.seed = 5;
  tcfg.lambda = 0.0;
  tcfg.lr = 2e-3;
  tcfg.steps = 600;
  tcfg.batch_size = 4;
  TaskMixConfig task;
  task.length = 36;

  auto weights = aha::task_weights("local_lm");
  auto full = train_model(mcfg, tcfg, task, weights, GateForce::all_full);
  auto local = train_model(mcfg, tcfg, task, weights, GateForce::all_local);
  auto ev_full = eval_model(full, mcfg, task, weights, 50, 64, GateForce::all_full);
  auto ev_local = eval_model(local, mcfg, task, weights, 50, 64, GateForce::all_local);

  // The process is first-order, so the long-range branch buys nothing.
  const double spread = std::fabs(ev_full.loss - ev_local.loss);
  CHECK(spread <= 0.05 * std::max(ev_full.loss, ev_local.loss));

  // Both sit just above the generator's entropy rate.
  const double entropy =
      aha::tasks::make_local_lm_table(task.table_seed, task.order).entropy_rate();
  CHECK(entropy > 0.0);
  CHECK(ev_full.loss > entropy - 0.05);
  CHECK(ev_local.loss > entropy - 0.05);
  CHECK(ev_full.loss < entropy * 1.15);
  CHECK(ev_local.loss < entropy * 1.15);
}

TEST_CASE("a trained mixed model concentrates usage and separates the tasks") {
  ModelConfig mcfg;
  mcfg.vocab = 64;
  mcfg.d = 64;
  mcfg.layers = 2;
  mcfg.heads = 4;
  mcfg.window = 8;
  mcfg.max_seq_len = 64;
  mcfg.seed = 0;
  TrainConfig tcfg;
  tcfg.seed = 0;
  tcfg.lambda = 0.02;
  tcfg.lr = 5e-4;
  tcfg.steps = 1000;
  tcfg.batch_size = 4;
  TaskMixConfig task;
  task.length = 48;
  task.key_distance = 24;

  auto params = train_model(mcfg, tcfg, task, aha::task_weights("mixed"));

  // A handful of heads carry most of the remaining full attention.
  {
    auto ev = eval_model(params, mcfg, task, aha::task_weights("mixed"), 60, 32);
    auto curve = aha::sorted_usage_curve(aha::per_head_usage(ev.traces));
    double total = 0.0;
    for (const auto& head : curve) total += head.usage;
    const double top_fraction = 0.1;  // configurable: heads counted as the "top"
    const auto top_k = static_cast<std::size_t>(
        std::ceil(top_fraction * static_cast<double>(curve.size())));
    double top_mass = 0.0;
    for (std::size_t i = 0; i < top_k && i < curve.size(); ++i) top_mass += curve[i].usage;
    CHECK(total > 0.0);
    CHECK(top_mass / total > 0.5);
  }

  // Retrieval spikes the answer token above counting's typical usage.
  {
    auto ev_needle = eval_model(params, mcfg, task, aha::task_weights("needle"), 61, 32);
    auto ev_count = eval_model(params, mcfg, task, aha::task_weights("counting"), 62, 32);
    const double answer_usage = ev_needle.usage.per_token.back();
    const double counting_median = median(ev_count.usage.per_token);
    CHECK(answer_usage > counting_median);
  }

}

TEST_CASE("forcing every gate open roughly matches the router on counting") {
  ModelConfig mcfg;
  mcfg.vocab = 64;
  mcfg.d = 64;
  mcfg.layers = 2;
  mcfg.heads = 4;
  mcfg.window = 8;
  mcfg.max_seq_len = 64;
  mcfg.seed = 0;
  TrainConfig tcfg;
  tcfg.seed = 0;
  tcfg.lambda = 0.0;  // no pressure: gates shut only where the local path wins
  tcfg.lr = 5e-4;
  tcfg.steps = 600;
  tcfg.batch_size = 4;
  TaskMixConfig task;
  task.length = 48;

  auto weights = aha::task_weights("counting");
  auto params = train_model(mcfg, tcfg, task, weights);
  auto ev_auto = eval_model(params, mcfg, task, weights, 63, 32);
  auto ev_full = eval_model(params, mcfg, task, weights, 63, 32, GateForce::all_full);
  CHECK(ev_full.usage.mu_f_overall == 1.0);
  CHECK(ev_auto.usage.mu_f_overall < 1.0);
  CHECK(std::fabs(ev_full.accuracy - ev_auto.accuracy) <= 0.15);
}
