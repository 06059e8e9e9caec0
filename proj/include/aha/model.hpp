#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aha/attention.hpp"
#include "aha/errors.hpp"
#include "aha/ops.hpp"
#include "aha/rng.hpp"
#include "aha/tensor.hpp"

// Decoder-only transformer over AHA blocks: pre-norm residual layout,
// RMS-normalization, SiLU MLP, sinusoidal absolute positions added at the
// embedding, untied LM head.

namespace aha {

struct ModelConfig {
  int vocab = 64;
  int d = 64;
  int layers = 2;
  int heads = 4;
  int mlp_hidden = 0;  // 0 means 4*d
  int max_seq_len = 256;
  int window = 8;
  double tau = 0.5;
  std::uint64_t seed = 0;

  int mlp() const { return mlp_hidden > 0 ? mlp_hidden : 4 * d; }

  AHAConfig attn() const {
    AHAConfig a;
    a.d = d;
    a.m = heads;
    a.w = window;
    a.tau = tau;
    return a;
  }

  void validate() const {
    if (vocab <= 0 || d <= 0 || layers <= 0 || heads <= 0 || max_seq_len <= 0)
      throw config_error("model: all dimensions must be positive");
    attn().validate();
  }
};

inline bool operator==(const ModelConfig& a, const ModelConfig& b) {
  return a.vocab == b.vocab && a.d == b.d && a.layers == b.layers && a.heads == b.heads &&
         a.mlp_hidden == b.mlp_hidden && a.max_seq_len == b.max_seq_len &&
         a.window == b.window && a.tau == b.tau && a.seed == b.seed;
}

template <class T>
struct ModelParams {
  struct Layer {
    AHABlockWeights<T> attn;
    Tensor<T> norm1, norm2;      // d gains
    Tensor<T> mlp_in, mlp_out;   // d x H, H x d
  };

  Tensor<T> emb;  // V x d
  std::vector<Layer> layers;
  Tensor<T> final_norm;  // d
  Tensor<T> lm_head;     // d x V

  // Visits every parameter in a fixed order: fn(name, tensor, weight_decay).
  // Norm gains and the router bias are excluded from weight decay.
  template <class F>
  void for_each(F&& fn) {
    for_each_impl(*this, fn);
  }
  template <class F>
  void for_each(F&& fn) const {
    for_each_impl(*this, fn);
  }

  void set_requires_grad(bool rg) {
    for_each([rg](const std::string&, Tensor<T>& t, bool) { t.set_requires_grad(rg); });
  }

  void zero_grad() {
    for_each([](const std::string&, Tensor<T>& t, bool) { t.zero_grad(); });
  }

 private:
  template <class Self, class F>
  static void for_each_impl(Self& self, F& fn) {
    fn("emb", self.emb, true);
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      auto& lay = self.layers[l];
      fn(p + "norm1", lay.norm1, false);
      fn(p + "wq", lay.attn.wq, true);
      fn(p + "wk", lay.attn.wk, true);
      fn(p + "wv", lay.attn.wv, true);
      fn(p + "wo", lay.attn.wo, true);
      fn(p + "router_w", lay.attn.w_router, true);
      fn(p + "router_b", lay.attn.router_bias, false);
      fn(p + "norm2", lay.norm2, false);
      fn(p + "mlp_in", lay.mlp_in, true);
      fn(p + "mlp_out", lay.mlp_out, true);
    }
    fn("final_norm", self.final_norm, false);
    fn("lm_head", self.lm_head, true);
  }
};

// Closed-form total parameter count for a config (tested against the
// enumerated tensors).
inline std::int64_t param_count(const ModelConfig& cfg) {
  const std::int64_t V = cfg.vocab, d = cfg.d, L = cfg.layers, m = cfg.heads, H = cfg.mlp();
  return V * d + L * (4 * d * d + d * m + m + 2 * d + 2 * d * H) + d + d * V;
}

// Deterministic initialization: scaled normals (std 0.02) with the residual
// output projections shrunk by 1/sqrt(2L); router weights zero with bias +1
// so every gate starts open and the model begins as pure full attention.
template <class T>
ModelParams<T> init_params(const ModelConfig& cfg) {
  cfg.validate();
  const double residual_scale = 1.0 / std::sqrt(2.0 * cfg.layers);
  ModelParams<T> p;

  auto fill_normal = [&](Shape shape, const std::string& name, double std_dev) {
    Rng rng(cfg.seed, name);
    std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) x = static_cast<T>(rng.normal(0.0, std_dev));
    return Tensor<T>::from(std::move(shape), std::move(v));
  };

  p.emb = fill_normal({cfg.vocab, cfg.d}, "emb", 0.02);
  p.layers.resize(static_cast<std::size_t>(cfg.layers));
  for (int l = 0; l < cfg.layers; ++l) {
    auto& lay = p.layers[static_cast<std::size_t>(l)];
    const std::string pref = "layer" + std::to_string(l) + ".";
    lay.attn.wq = fill_normal({cfg.d, cfg.d}, pref + "wq", 0.02);
    lay.attn.wk = fill_normal({cfg.d, cfg.d}, pref + "wk", 0.02);
    lay.attn.wv = fill_normal({cfg.d, cfg.d}, pref + "wv", 0.02);
    lay.attn.wo = fill_normal({cfg.d, cfg.d}, pref + "wo", 0.02 * residual_scale);
    lay.attn.w_router = Tensor<T>::zeros({cfg.d, cfg.heads});
    lay.attn.router_bias = Tensor<T>::filled({cfg.heads}, T(1));
    lay.norm1 = Tensor<T>::filled({cfg.d}, T(1));
    lay.norm2 = Tensor<T>::filled({cfg.d}, T(1));
    lay.mlp_in = fill_normal({cfg.d, cfg.mlp()}, pref + "mlp_in", 0.02);
    lay.mlp_out = fill_normal({cfg.mlp(), cfg.d}, pref + "mlp_out", 0.02 * residual_scale);
  }
  p.final_norm = Tensor<T>::filled({cfg.d}, T(1));
  p.lm_head = fill_normal({cfg.d, cfg.vocab}, "lm_head", 0.02);
  return p;
}

// Sinusoidal absolute positions, scaled down to sit well under the 0.02-std
// embeddings.
template <class T>
Tensor<T> positional_encoding(std::int64_t n, int d, double scale = 0.05) {
  std::vector<T> v(static_cast<std::size_t>(n * d));
  for (std::int64_t i = 0; i < n; ++i)
    for (int j = 0; j < d; j += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(j) / d);
      const double angle = static_cast<double>(i) * freq;
      v[static_cast<std::size_t>(i * d + j)] = static_cast<T>(scale * std::sin(angle));
      if (j + 1 < d)
        v[static_cast<std::size_t>(i * d + j + 1)] = static_cast<T>(scale * std::cos(angle));
    }
  return Tensor<T>::from({n, d}, std::move(v));
}

template <class T>
struct ForwardResult {
  Tensor<T> logits;                     // n x V
  std::vector<Tensor<T>> layer_scores;  // per layer, n x m, taped
  std::vector<GateMatrix> gate_traces;  // per layer
};

template <class T>
ForwardResult<T> forward(const ModelParams<T>& params, const ModelConfig& cfg,
                         std::span<const int> tokens,
                         GateForce force = GateForce::automatic) {
  cfg.validate();
  const std::int64_t n = static_cast<std::int64_t>(tokens.size());
  if (n < 1) throw shape_error("forward: empty token sequence");
  if (n > cfg.max_seq_len)
    throw shape_error("forward: sequence length " + std::to_string(n) + " exceeds max " +
                      std::to_string(cfg.max_seq_len));

  ForwardResult<T> res;
  auto x = add(embedding_lookup(params.emb, tokens), positional_encoding<T>(n, cfg.d));
  const AHAConfig acfg = cfg.attn();
  for (const auto& lay : params.layers) {
    auto blk = aha_block(rmsnorm(x, lay.norm1), lay.attn, acfg, force);
    x = add(x, blk.output);
    res.layer_scores.push_back(std::move(blk.scores));
    res.gate_traces.push_back(std::move(blk.trace));
    auto h = rmsnorm(x, lay.norm2);
    x = add(x, matmul(silu(matmul(h, lay.mlp_in)), lay.mlp_out));
  }
  res.logits = matmul(rmsnorm(x, params.final_norm), params.lm_head);
  return res;
}

}  // namespace aha
