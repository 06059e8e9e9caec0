#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "aha/errors.hpp"
#include "aha/ops.hpp"
#include "aha/rng.hpp"
#include "aha/tensor.hpp"

// The all-or-here attention block: every (token, head) pair routes between
// full causal attention and a local sliding window, decided by a learned
// sigmoid router hard-thresholded at tau. Training computes both paths
// densely and selects; the straight-through estimator carries the gate
// gradient back into the router.

namespace aha {

struct AHAConfig {
  int d = 64;          // model width
  int m = 4;           // heads
  int w = 8;           // sliding window, current token inclusive
  double tau = 0.5;    // routing threshold, strict >

  int head_dim() const { return d / m; }

  void validate() const {
    if (d <= 0 || m <= 0 || d % m != 0)
      throw config_error("attention: d must be positive and divisible by heads (d=" +
                         std::to_string(d) + ", m=" + std::to_string(m) + ")");
    if (w < 1) throw config_error("attention: window must be >= 1");
    if (!(tau > 0.0 && tau < 1.0)) throw config_error("attention: tau must lie in (0,1)");
  }
};

template <class T>
struct AHABlockWeights {
  Tensor<T> wq, wk, wv, wo;   // d x d
  Tensor<T> w_router;         // d x m
  Tensor<T> router_bias;      // m
};

// Detached per-block routing snapshot, kept for tracing and analysis.
struct GateMatrix {
  int n = 0;
  int m = 0;
  std::vector<std::uint8_t> values;  // n*m, row-major, each 0 or 1
  std::vector<double> scores;        // n*m pre-threshold sigmoid scores

  bool on(int i, int h) const { return values[static_cast<std::size_t>(i * m + h)] != 0; }
  double score(int i, int h) const { return scores[static_cast<std::size_t>(i * m + h)]; }
};

enum class GateForce { automatic, all_full, all_local };

inline const char* to_string(GateForce f) {
  switch (f) {
    case GateForce::automatic: return "auto";
    case GateForce::all_full: return "all-full";
    case GateForce::all_local: return "all-local";
  }
  return "?";
}

// Pre-threshold routing scores: sigmoid(X W_Router + bias).
template <class T>
Tensor<T> router_scores(const Tensor<T>& x, const Tensor<T>& w_router,
                        const Tensor<T>& router_bias) {
  return sigmoid(add_row(matmul(x, w_router), router_bias));
}

template <class T>
struct AHABlockResult {
  Tensor<T> output;  // n x d
  Tensor<T> scores;  // n x m, taped: the sparsity penalty differentiates this
  Tensor<T> gates;   // n x m, exactly {0,1}
  GateMatrix trace;
};

// Forcing adds a saturating offset to the router logits: sigmoid(+1e4) is
// exactly 1 and sigmoid(-1e4) exactly 0 in both precisions, so forced runs
// take one branch everywhere while leaving the rest of the graph untouched.
template <class T>
AHABlockResult<T> aha_block(const Tensor<T>& x, const AHABlockWeights<T>& w,
                            const AHAConfig& cfg, GateForce force = GateForce::automatic) {
  cfg.validate();
  if (x.rank() != 2 || x.dim(1) != cfg.d)
    throw shape_error("aha_block: input " + shape_str(x.shape()) + " does not match d=" +
                      std::to_string(cfg.d));
  const std::int64_t n = x.dim(0);

  auto logits = add_row(matmul(x, w.w_router), w.router_bias);
  if (force != GateForce::automatic) {
    const T offset = force == GateForce::all_full ? T(1e4) : T(-1e4);
    logits = add(logits, Tensor<T>::filled(logits.shape(), offset));
  }
  auto scores = sigmoid(logits);
  auto gates = ste_threshold(scores, static_cast<T>(cfg.tau));

  auto q = matmul(x, w.wq);
  auto k = matmul(x, w.wk);
  auto v = matmul(x, w.wv);
  auto full = full_attention(q, k, v, cfg.m);
  auto local = sliding_window_attention(q, k, v, cfg.m, cfg.w);
  auto mixed = gated_branch_select(gates, full, local);
  auto out = matmul(mixed, w.wo);

  GateMatrix trace;
  trace.n = static_cast<int>(n);
  trace.m = cfg.m;
  trace.values.resize(static_cast<std::size_t>(n) * cfg.m);
  trace.scores.resize(trace.values.size());
  for (std::size_t i = 0; i < trace.values.size(); ++i) {
    trace.values[i] = gates.data()[i] > T(0.5) ? 1 : 0;
    trace.scores[i] = static_cast<double>(scores.data()[i]);
  }
  return {std::move(out), std::move(scores), std::move(gates), std::move(trace)};
}

// True iff outputs at positions <= i are unchanged (within tol) after
// perturbing every position > i. `fwd` maps an n x d input to an n x d-or-V
// output; i is a 0-based position index.
template <class T>
bool causal_independence_check(const std::function<Tensor<T>(const Tensor<T>&)>& fwd,
                               const Tensor<T>& x, std::int64_t i, Rng& rng,
                               double tol = 1e-6) {
  if (x.rank() != 2 || i < 0 || i >= x.dim(0))
    throw shape_error("causal_independence_check: bad position");
  const std::int64_t n = x.dim(0), d = x.dim(1);
  auto base = fwd(x);
  std::vector<T> bumped(x.data());
  for (std::int64_t r = i + 1; r < n; ++r)
    for (std::int64_t c = 0; c < d; ++c)
      bumped[static_cast<std::size_t>(r * d + c)] += static_cast<T>(rng.normal() * 0.5);
  auto moved = fwd(Tensor<T>::from(x.shape(), std::move(bumped)));
  if (base.shape() != moved.shape())
    throw shape_error("causal_independence_check: forward changed shape");
  const std::int64_t cols = base.dim(1);
  for (std::int64_t r = 0; r <= i; ++r)
    for (std::int64_t c = 0; c < cols; ++c) {
      const double diff = std::fabs(static_cast<double>(
          base.data()[static_cast<std::size_t>(r * cols + c)] -
          moved.data()[static_cast<std::size_t>(r * cols + c)]));
      if (!(diff < tol)) return false;
    }
  return true;
}

}  // namespace aha
