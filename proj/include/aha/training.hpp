#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "aha/errors.hpp"
#include "aha/model.hpp"
#include "aha/ops.hpp"
#include "aha/tasks.hpp"
#include "aha/tensor.hpp"

// Joint objective (language modeling + sparsity penalty on router scores),
// AdamW with linear warmup, and the deterministic training loop.

namespace aha {

struct TrainConfig {
  double lambda = 3e-4;       // sparsity penalty coefficient
  double lr = 3e-4;           // toy-scale default; see README for rationale
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double warmup_ratio = 0.03;
  int steps = 100;
  int batch_size = 8;
  std::uint64_t seed = 0;
  bool freeze_base = false;   // update only router weights/biases
  double clip_norm = 0.0;     // 0 disables global-norm clipping

  void validate() const {
    if (lambda < 0.0) throw config_error("train: lambda must be >= 0");
    if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0))
      throw config_error("train: warmup_ratio must lie in [0,1)");
    if (lr <= 0.0) throw config_error("train: lr must be positive");
    if (steps < 1 || batch_size < 1)
      throw config_error("train: steps and batch_size must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
      throw config_error("train: betas must lie in [0,1)");
    if (clip_norm < 0.0) throw config_error("train: clip_norm must be >= 0");
  }
};

struct StepRecord {
  int step = 0;
  double lm_loss = 0.0;
  double reg_loss = 0.0;
  double total_loss = 0.0;
  double mu_f = 0.0;  // fraction of gates routed to full attention
  double lr = 0.0;
};

// Mean of every pre-threshold router score across layers: the gradient of
// this term is what pushes scores below tau.
template <class T>
Tensor<T> reg_loss(const std::vector<Tensor<T>>& layer_scores) {
  if (layer_scores.empty()) throw shape_error("reg_loss: no score traces");
  Tensor<T> all = layer_scores[0];
  for (std::size_t l = 1; l < layer_scores.size(); ++l)
    all = concat_rows(all, layer_scores[l]);
  return mean_all(all);
}

template <class T>
Tensor<T> total_loss(const Tensor<T>& lm, const Tensor<T>& reg, double lambda) {
  return add(lm, scale(reg, static_cast<T>(lambda)));
}

// Linear ramp to base_lr over ceil(ratio * total) steps, constant afterwards.
inline double lr_at(int step, int total_steps, double base_lr, double warmup_ratio) {
  const int warmup = static_cast<int>(std::ceil(warmup_ratio * total_steps));
  if (warmup <= 0 || step >= warmup) return base_lr;
  return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
}

namespace detail {

// One AdamW update on a flat buffer: bias-corrected moments, decoupled
// weight decay. t is the 1-based step count.
template <class T>
void adamw_update(std::vector<T>& value, const std::vector<T>& grad, std::vector<T>& m,
                  std::vector<T>& v, int t, double lr, const TrainConfig& cfg, bool decay) {
  if (t < 1) throw config_error("adamw: time step must be >= 1");
  if (grad.size() != value.size() || m.size() != value.size() || v.size() != value.size())
    throw shape_error("adamw: buffer sizes disagree");
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < value.size(); ++i) {
    const double g = static_cast<double>(grad[i]);
    m[i] = static_cast<T>(cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g);
    v[i] = static_cast<T>(cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g);
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    double update = mhat / (std::sqrt(vhat) + cfg.eps);
    if (decay) update += cfg.weight_decay * static_cast<double>(value[i]);
    value[i] = static_cast<T>(value[i] - lr * update);
  }
}

}  // namespace detail

// Optimizer over a whole parameter set; moments are keyed by parameter name.
template <class T>
class AdamW {
 public:
  explicit AdamW(const TrainConfig& cfg) : cfg_(cfg) {}

  // Applies one update at time step t (1-based) to every parameter accepted
  // by `trainable`. Parameters without gradients are left untouched.
  void step(ModelParams<T>& params, int t, double lr,
            const std::function<bool(const std::string&)>& trainable = {}) {
    params.for_each([&](const std::string& name, Tensor<T>& p, bool decay) {
      if (trainable && !trainable(name)) return;
      if (!p.has_grad()) return;
      auto& slot = slots_[name];
      auto& value = p.node()->value;
      if (slot.m.empty()) {
        slot.m.assign(value.size(), T(0));
        slot.v.assign(value.size(), T(0));
      }
      detail::adamw_update(value, p.node()->grad, slot.m, slot.v, t, lr, cfg_, decay);
    });
  }

 private:
  struct Slot {
    std::vector<T> m, v;
  };
  TrainConfig cfg_;
  std::map<std::string, Slot> slots_;
};

namespace detail {

inline bool is_router_param(const std::string& name) {
  return name.find("router_") != std::string::npos;
}

// Global-norm clip over the trainable set, fixed summation order.
template <class T>
void clip_gradients(ModelParams<T>& params, double clip_norm,
                    const std::function<bool(const std::string&)>& trainable) {
  double sq = 0.0;
  params.for_each([&](const std::string& name, Tensor<T>& p, bool) {
    if (trainable && !trainable(name)) return;
    if (!p.has_grad()) return;
    for (const T g : p.node()->grad) sq += static_cast<double>(g) * static_cast<double>(g);
  });
  const double norm = std::sqrt(sq);
  if (norm <= clip_norm) return;
  const double scale = clip_norm / norm;
  params.for_each([&](const std::string& name, Tensor<T>& p, bool) {
    if (trainable && !trainable(name)) return;
    if (!p.has_grad()) return;
    for (T& g : p.node()->grad) g = static_cast<T>(g * scale);
  });
}

}  // namespace detail

template <class T>
struct TrainResult {
  ModelParams<T> params;
  std::vector<StepRecord> records;
};

// Runs the loop: per step, batch_size samples from `next_sample`, one
// per-sample graph each contributing 1/batch of the joint loss, then one
// AdamW update. A non-finite forward value aborts with a diagnostic record
// (NaN fields) before the error propagates.
template <class T>
TrainResult<T> train(const ModelConfig& mcfg, const TrainConfig& tcfg,
                     const std::function<tasks::TaskSample()>& next_sample,
                     const std::function<void(const StepRecord&)>& on_step = {},
                     GateForce force = GateForce::automatic) {
  mcfg.validate();
  tcfg.validate();
  TrainResult<T> result{init_params<T>(mcfg), {}};
  auto& params = result.params;
  params.set_requires_grad(true);
  AdamW<T> opt(tcfg);
  std::function<bool(const std::string&)> trainable;
  if (tcfg.freeze_base) trainable = detail::is_router_param;

  for (int step = 1; step <= tcfg.steps; ++step) {
    const double lr = lr_at(step, tcfg.steps, tcfg.lr, tcfg.warmup_ratio);
    params.zero_grad();
    double lm_sum = 0.0, reg_sum = 0.0, total_sum = 0.0;
    std::int64_t gates_on = 0, gates_total = 0;
    const T inv_batch = T(1) / static_cast<T>(tcfg.batch_size);

    try {
      for (int b = 0; b < tcfg.batch_size; ++b) {
        const auto sample = next_sample();
        const auto n = static_cast<std::int64_t>(sample.tokens.size());
        if (n < 2) throw shape_error("train: sample too short");
        // Next-token split: inputs are tokens[0..n-2], token i (i>=1) is a
        // target exactly when its loss_mask bit is set.
        std::span<const int> inputs(sample.tokens.data(), static_cast<std::size_t>(n - 1));
        std::span<const int> targets(sample.tokens.data() + 1, static_cast<std::size_t>(n - 1));
        std::span<const std::uint8_t> mask(sample.loss_mask.data() + 1,
                                           static_cast<std::size_t>(n - 1));
        auto fwd = forward(params, mcfg, inputs, force);
        auto lm = cross_entropy_logits(fwd.logits, targets, mask);
        auto reg = reg_loss(fwd.layer_scores);
        auto joint = total_loss(lm, reg, tcfg.lambda);
        lm_sum += static_cast<double>(lm.item());
        reg_sum += static_cast<double>(reg.item());
        total_sum += static_cast<double>(joint.item());
        for (const auto& g : fwd.gate_traces) {
          for (auto v : g.values) gates_on += v;
          gates_total += static_cast<std::int64_t>(g.values.size());
        }
        backward(scale(joint, inv_batch));
      }
    } catch (const numeric_error&) {
      StepRecord bad;
      bad.step = step;
      bad.lm_loss = bad.reg_loss = bad.total_loss = bad.mu_f =
          std::numeric_limits<double>::quiet_NaN();
      bad.lr = lr;
      result.records.push_back(bad);
      if (on_step) on_step(bad);
      throw;
    }

    if (tcfg.clip_norm > 0.0) detail::clip_gradients(params, tcfg.clip_norm, trainable);
    opt.step(params, step, lr, trainable);

    StepRecord rec;
    rec.step = step;
    rec.lm_loss = lm_sum / tcfg.batch_size;
    rec.reg_loss = reg_sum / tcfg.batch_size;
    rec.total_loss = total_sum / tcfg.batch_size;
    rec.mu_f = gates_total > 0 ? static_cast<double>(gates_on) / static_cast<double>(gates_total)
                               : 0.0;
    rec.lr = lr;
    result.records.push_back(rec);
    if (on_step) on_step(rec);
  }
  return result;
}

// Appends step records to a CSV file with a fixed column order and fixed
// formatting, so identical runs produce byte-identical logs.
class StepCsvWriter {
 public:
  explicit StepCsvWriter(const std::string& path) : out_(path) {
    if (!out_) throw io_error("cannot write step log: " + path);
    out_ << "step,lm_loss,reg_loss,total_loss,mu_f,lr\n";
  }

  void append(const StepRecord& r) {
    char buf[200];
    std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%.10g,%.10g\n", r.step, r.lm_loss,
                  r.reg_loss, r.total_loss, r.mu_f, r.lr);
    out_ << buf;
  }

 private:
  std::ofstream out_;
};

}  // namespace aha
