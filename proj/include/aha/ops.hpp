#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aha/errors.hpp"
#include "aha/kernels.hpp"
#include "aha/tensor.hpp"

// Taped tensor ops. Every op validates shapes, checks its output for
// non-finite values (a hard error, never silent NaN propagation), and attaches
// a backward closure when any input requires gradients.

namespace aha {

namespace detail {

template <class T>
void check_finite(const std::vector<T>& v, const char* op) {
  for (const T x : v)
    if (!std::isfinite(x))
      throw numeric_error(std::string(op) + ": non-finite value in output");
}

template <class T>
Tensor<T> make_op(Shape shape, std::vector<T> value,
                  std::vector<std::shared_ptr<TensorNode<T>>> parents,
                  std::function<void(TensorNode<T>&)> backward_fn,
                  const char* op) {
  check_finite(value, op);
  auto node = std::make_shared<TensorNode<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  for (const auto& p : parents)
    if (p->requires_grad) {
      node->requires_grad = true;
      break;
    }
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor<T>(std::move(node));
}

template <class T>
inline T stable_sigmoid(T x) {
  if (x >= T(0)) {
    return T(1) / (T(1) + std::exp(-x));
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw shape_error("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(a.data());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(
      a.shape(), std::move(out), {an, bn},
      [an, bn](TensorNode<T>& self) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
        }
      },
      "add");
}

// a[n x k] + row vector b[k], broadcast over rows.
template <class T>
Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 1 || a.dim(1) != b.dim(0))
    throw shape_error("add_row: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::int64_t n = a.dim(0), k = a.dim(1);
  std::vector<T> out(a.data());
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < k; ++j) out[static_cast<std::size_t>(i * k + j)] += b.data()[static_cast<std::size_t>(j)];
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(
      a.shape(), std::move(out), {an, bn},
      [an, bn, n, k](TensorNode<T>& self) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < k; ++j)
              bn->grad[static_cast<std::size_t>(j)] += self.grad[static_cast<std::size_t>(i * k + j)];
        }
      },
      "add_row");
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw shape_error("mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(a.data());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(
      a.shape(), std::move(out), {an, bn},
      [an, bn](TensorNode<T>& self) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            an->grad[i] += self.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            bn->grad[i] += self.grad[i] * an->value[i];
        }
      },
      "mul");
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  std::vector<T> out(a.data());
  for (auto& x : out) x *= c;
  auto an = a.node();
  return detail::make_op<T>(
      a.shape(), std::move(out), {an},
      [an, c](TensorNode<T>& self) {
        an->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += c * self.grad[i];
      },
      "scale");
}

template <class T>
Tensor<T> sum_all(const Tensor<T>& a) {
  T s = T(0);
  for (const T x : a.data()) s += x;
  auto an = a.node();
  return detail::make_op<T>(
      Shape{}, std::vector<T>{s}, {an},
      [an](TensorNode<T>& self) {
        an->ensure_grad();
        const T g = self.grad[0];
        for (auto& gi : an->grad) gi += g;
      },
      "sum_all");
}

template <class T>
Tensor<T> mean_all(const Tensor<T>& a) {
  if (a.size() == 0) throw shape_error("mean_all: empty tensor");
  T s = T(0);
  for (const T x : a.data()) s += x;
  const T inv_n = T(1) / static_cast<T>(a.size());
  auto an = a.node();
  return detail::make_op<T>(
      Shape{}, std::vector<T>{s * inv_n}, {an},
      [an, inv_n](TensorNode<T>& self) {
        an->ensure_grad();
        const T g = self.grad[0] * inv_n;
        for (auto& gi : an->grad) gi += g;
      },
      "mean_all");
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw shape_error("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int p = static_cast<int>(a.dim(0)), q = static_cast<int>(a.dim(1)),
            r = static_cast<int>(b.dim(1));
  std::vector<T> out(static_cast<std::size_t>(p) * r);
  kern::matmul_nn(a.data().data(), b.data().data(), out.data(), p, q, r, false);
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(
      Shape{p, r}, std::move(out), {an, bn},
      [an, bn, p, q, r](TensorNode<T>& self) {
        if (an->requires_grad) {
          an->ensure_grad();
          kern::matmul_nt(self.grad.data(), bn->value.data(), an->grad.data(), p, r, q, true);
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          kern::matmul_tn(an->value.data(), self.grad.data(), bn->grad.data(), q, p, r, true);
        }
      },
      "matmul");
}

template <class T>
Tensor<T> transpose2d(const Tensor<T>& a) {
  if (a.rank() != 2) throw shape_error("transpose2d: need rank 2, got " + shape_str(a.shape()));
  const std::int64_t n = a.dim(0), k = a.dim(1);
  std::vector<T> out(static_cast<std::size_t>(n * k));
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < k; ++j)
      out[static_cast<std::size_t>(j * n + i)] = a.data()[static_cast<std::size_t>(i * k + j)];
  auto an = a.node();
  return detail::make_op<T>(
      Shape{k, n}, std::move(out), {an},
      [an, n, k](TensorNode<T>& self) {
        an->ensure_grad();
        for (std::int64_t i = 0; i < n; ++i)
          for (std::int64_t j = 0; j < k; ++j)
            an->grad[static_cast<std::size_t>(i * k + j)] += self.grad[static_cast<std::size_t>(j * n + i)];
      },
      "transpose2d");
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.size())
    throw shape_error("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  auto an = a.node();
  return detail::make_op<T>(
      std::move(shape), std::vector<T>(a.data()), {an},
      [an](TensorNode<T>& self) {
        an->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
      },
      "reshape");
}

template <class T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
    throw shape_error("concat_rows: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(a.data());
  out.insert(out.end(), b.data().begin(), b.data().end());
  const std::size_t na = a.data().size();
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(
      Shape{a.dim(0) + b.dim(0), a.dim(1)}, std::move(out), {an, bn},
      [an, bn, na](TensorNode<T>& self) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (std::size_t i = 0; i < na; ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::size_t i = na; i < self.grad.size(); ++i) bn->grad[i - na] += self.grad[i];
        }
      },
      "concat_rows");
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  std::vector<T> out(a.data());
  for (auto& x : out) x = detail::stable_sigmoid(x);
  auto an = a.node();
  return detail::make_op<T>(
      a.shape(), std::move(out), {an},
      [an](TensorNode<T>& self) {
        an->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          const T y = self.value[i];
          an->grad[i] += self.grad[i] * y * (T(1) - y);
        }
      },
      "sigmoid");
}

template <class T>
Tensor<T> silu(const Tensor<T>& a) {
  std::vector<T> out(a.data());
  for (auto& x : out) x = x * detail::stable_sigmoid(x);
  auto an = a.node();
  return detail::make_op<T>(
      a.shape(), std::move(out), {an},
      [an](TensorNode<T>& self) {
        an->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          const T x = an->value[i];
          const T s = detail::stable_sigmoid(x);
          an->grad[i] += self.grad[i] * s * (T(1) + x * (T(1) - s));
        }
      },
      "silu");
}

// Row-wise softmax over the last axis of a 2D tensor. Masked entries (mask 0)
// get exactly 0; a fully masked row signals a malformed mask and throws.
template <class T>
Tensor<T> softmax_row(const Tensor<T>& a, const std::vector<std::uint8_t>* mask = nullptr) {
  if (a.rank() != 2) throw shape_error("softmax_row: need rank 2, got " + shape_str(a.shape()));
  const std::int64_t rows = a.dim(0), k = a.dim(1);
  if (mask && static_cast<std::int64_t>(mask->size()) != rows * k)
    throw shape_error("softmax_row: mask size mismatch");
  std::vector<T> out(static_cast<std::size_t>(rows * k), T(0));
  std::vector<std::uint8_t> mcopy = mask ? *mask : std::vector<std::uint8_t>();
  for (std::int64_t i = 0; i < rows; ++i) {
    const T* x = a.data().data() + i * k;
    T* y = out.data() + i * k;
    T maxv = -std::numeric_limits<T>::infinity();
    for (std::int64_t j = 0; j < k; ++j)
      if (!mask || mcopy[static_cast<std::size_t>(i * k + j)]) maxv = std::max(maxv, x[j]);
    if (maxv == -std::numeric_limits<T>::infinity())
      throw shape_error("softmax_row: fully masked row " + std::to_string(i));
    T denom = T(0);
    for (std::int64_t j = 0; j < k; ++j) {
      if (!mask || mcopy[static_cast<std::size_t>(i * k + j)]) {
        y[j] = std::exp(x[j] - maxv);
        denom += y[j];
      }
    }
    for (std::int64_t j = 0; j < k; ++j) y[j] /= denom;
  }
  auto an = a.node();
  return detail::make_op<T>(
      a.shape(), std::move(out), {an},
      [an, rows, k, mcopy = std::move(mcopy), masked = (mask != nullptr)](TensorNode<T>& self) {
        an->ensure_grad();
        for (std::int64_t i = 0; i < rows; ++i) {
          const T* p = self.value.data() + i * k;
          const T* d = self.grad.data() + i * k;
          T dot = T(0);
          for (std::int64_t j = 0; j < k; ++j) dot += p[j] * d[j];
          for (std::int64_t j = 0; j < k; ++j) {
            if (masked && !mcopy[static_cast<std::size_t>(i * k + j)]) continue;
            an->grad[static_cast<std::size_t>(i * k + j)] += p[j] * (d[j] - dot);
          }
        }
      },
      "softmax_row");
}

// Root-mean-square normalization per row with a learned gain.
template <class T>
Tensor<T> rmsnorm(const Tensor<T>& x, const Tensor<T>& gain, T eps = T(1e-6)) {
  if (x.rank() != 2 || gain.rank() != 1 || x.dim(1) != gain.dim(0))
    throw shape_error("rmsnorm: " + shape_str(x.shape()) + " vs " + shape_str(gain.shape()));
  const std::int64_t n = x.dim(0), d = x.dim(1);
  std::vector<T> out(static_cast<std::size_t>(n * d));
  std::vector<T> inv_rms(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const T* xi = x.data().data() + i * d;
    T ss = T(0);
    for (std::int64_t j = 0; j < d; ++j) ss += xi[j] * xi[j];
    const T r = T(1) / std::sqrt(ss / static_cast<T>(d) + eps);
    inv_rms[static_cast<std::size_t>(i)] = r;
    for (std::int64_t j = 0; j < d; ++j)
      out[static_cast<std::size_t>(i * d + j)] = xi[j] * r * gain.data()[static_cast<std::size_t>(j)];
  }
  auto xn = x.node(), gn = gain.node();
  return detail::make_op<T>(
      x.shape(), std::move(out), {xn, gn},
      [xn, gn, n, d, inv_rms = std::move(inv_rms)](TensorNode<T>& self) {
        for (std::int64_t i = 0; i < n; ++i) {
          const T r = inv_rms[static_cast<std::size_t>(i)];
          const T* xi = xn->value.data() + i * d;
          const T* dy = self.grad.data() + i * d;
          if (gn->requires_grad) {
            gn->ensure_grad();
            for (std::int64_t j = 0; j < d; ++j)
              gn->grad[static_cast<std::size_t>(j)] += dy[j] * xi[j] * r;
          }
          if (xn->requires_grad) {
            xn->ensure_grad();
            T acc = T(0);
            for (std::int64_t j = 0; j < d; ++j)
              acc += dy[j] * gn->value[static_cast<std::size_t>(j)] * xi[j];
            const T coef = r * r * r * acc / static_cast<T>(d);
            for (std::int64_t j = 0; j < d; ++j)
              xn->grad[static_cast<std::size_t>(i * d + j)] +=
                  r * gn->value[static_cast<std::size_t>(j)] * dy[j] - coef * xi[j];
          }
        }
      },
      "rmsnorm");
}

template <class T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const int> ids) {
  if (table.rank() != 2) throw shape_error("embedding_lookup: table must be rank 2");
  const std::int64_t vocab = table.dim(0), d = table.dim(1);
  const std::int64_t n = static_cast<std::int64_t>(ids.size());
  std::vector<T> out(static_cast<std::size_t>(n * d));
  for (std::int64_t i = 0; i < n; ++i) {
    const int id = ids[static_cast<std::size_t>(i)];
    if (id < 0 || id >= vocab)
      throw shape_error("embedding_lookup: id " + std::to_string(id) + " out of range [0," +
                        std::to_string(vocab) + ")");
    const T* row = table.data().data() + static_cast<std::int64_t>(id) * d;
    std::copy(row, row + d, out.begin() + i * d);
  }
  auto tn = table.node();
  std::vector<int> ids_copy(ids.begin(), ids.end());
  return detail::make_op<T>(
      Shape{n, d}, std::move(out), {tn},
      [tn, d, ids_copy = std::move(ids_copy)](TensorNode<T>& self) {
        tn->ensure_grad();
        for (std::size_t i = 0; i < ids_copy.size(); ++i) {
          T* dst = tn->grad.data() + static_cast<std::int64_t>(ids_copy[i]) * d;
          const T* src = self.grad.data() + static_cast<std::int64_t>(i) * d;
          for (std::int64_t j = 0; j < d; ++j) dst[j] += src[j];
        }
      },
      "embedding_lookup");
}

// Mean negative log-likelihood over unmasked positions.
template <class T>
Tensor<T> cross_entropy_logits(const Tensor<T>& logits, std::span<const int> targets,
                               std::span<const std::uint8_t> loss_mask) {
  if (logits.rank() != 2) throw shape_error("cross_entropy_logits: logits must be rank 2");
  const std::int64_t n = logits.dim(0), vocab = logits.dim(1);
  if (static_cast<std::int64_t>(targets.size()) != n ||
      static_cast<std::int64_t>(loss_mask.size()) != n)
    throw shape_error("cross_entropy_logits: row count mismatch");
  std::int64_t count = 0;
  T total = T(0);
  for (std::int64_t i = 0; i < n; ++i) {
    if (!loss_mask[static_cast<std::size_t>(i)]) continue;
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= vocab)
      throw shape_error("cross_entropy_logits: target " + std::to_string(t) + " out of range");
    const T* row = logits.data().data() + i * vocab;
    T maxv = row[0];
    for (std::int64_t j = 1; j < vocab; ++j) maxv = std::max(maxv, row[j]);
    T denom = T(0);
    for (std::int64_t j = 0; j < vocab; ++j) denom += std::exp(row[j] - maxv);
    total += std::log(denom) - (row[t] - maxv);
    ++count;
  }
  if (count == 0) throw shape_error("cross_entropy_logits: all positions masked");
  const T inv_count = T(1) / static_cast<T>(count);
  auto ln = logits.node();
  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<std::uint8_t> msk(loss_mask.begin(), loss_mask.end());
  return detail::make_op<T>(
      Shape{}, std::vector<T>{total * inv_count}, {ln},
      [ln, n, vocab, inv_count, tgt = std::move(tgt), msk = std::move(msk)](TensorNode<T>& self) {
        ln->ensure_grad();
        const T gscale = self.grad[0] * inv_count;
        for (std::int64_t i = 0; i < n; ++i) {
          if (!msk[static_cast<std::size_t>(i)]) continue;
          const T* row = ln->value.data() + i * vocab;
          T* grow = ln->grad.data() + i * vocab;
          T maxv = row[0];
          for (std::int64_t j = 1; j < vocab; ++j) maxv = std::max(maxv, row[j]);
          T denom = T(0);
          for (std::int64_t j = 0; j < vocab; ++j) denom += std::exp(row[j] - maxv);
          for (std::int64_t j = 0; j < vocab; ++j)
            grow[j] += gscale * (std::exp(row[j] - maxv) / denom);
          grow[tgt[static_cast<std::size_t>(i)]] -= gscale;
        }
      },
      "cross_entropy_logits");
}

// Hard threshold with a straight-through backward: forward emits the
// indicator of (s > tau); backward copies the upstream gradient unchanged.
template <class T>
Tensor<T> ste_threshold(const Tensor<T>& s, T tau) {
  std::vector<T> out(s.data());
  for (auto& x : out) x = x > tau ? T(1) : T(0);
  auto sn = s.node();
  return detail::make_op<T>(
      s.shape(), std::move(out), {sn},
      [sn](TensorNode<T>& self) {
        sn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) sn->grad[i] += self.grad[i];
      },
      "ste_threshold");
}

// Per token-head binary routing between two branch outputs. gate is [n x m]
// with values in {0,1}; branches are [n x (m*dh)] with head-blocked columns.
// Forward: out = gate ? on_branch : off_branch, per head block. Backward
// treats each branch's executed expression (g*on, (1-g)*off) literally: the
// gate gradient is the inner product of the upstream gradient with the
// selected branch's output, sign-flipped when the off branch is active.
template <class T>
Tensor<T> gated_branch_select(const Tensor<T>& gate, const Tensor<T>& on_branch,
                              const Tensor<T>& off_branch) {
  if (gate.rank() != 2 || on_branch.rank() != 2 || off_branch.rank() != 2)
    throw shape_error("gated_branch_select: need rank-2 inputs");
  if (on_branch.shape() != off_branch.shape())
    throw shape_error("gated_branch_select: branch shapes differ");
  const std::int64_t n = gate.dim(0), m = gate.dim(1), d = on_branch.dim(1);
  if (on_branch.dim(0) != n || d % m != 0)
    throw shape_error("gated_branch_select: gate " + shape_str(gate.shape()) +
                      " incompatible with branches " + shape_str(on_branch.shape()));
  const std::int64_t dh = d / m;
  std::vector<T> out(static_cast<std::size_t>(n * d));
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t h = 0; h < m; ++h) {
      const bool on = gate.data()[static_cast<std::size_t>(i * m + h)] > T(0.5);
      const T* src = (on ? on_branch : off_branch).data().data() + i * d + h * dh;
      std::copy(src, src + dh, out.begin() + i * d + h * dh);
    }
  auto gn = gate.node(), onn = on_branch.node(), offn = off_branch.node();
  return detail::make_op<T>(
      on_branch.shape(), std::move(out), {gn, onn, offn},
      [gn, onn, offn, n, m, dh, d](TensorNode<T>& self) {
        for (std::int64_t i = 0; i < n; ++i)
          for (std::int64_t h = 0; h < m; ++h) {
            const bool on = gn->value[static_cast<std::size_t>(i * m + h)] > T(0.5);
            const std::size_t off0 = static_cast<std::size_t>(i * d + h * dh);
            if (gn->requires_grad) {
              gn->ensure_grad();
              const auto& branch = on ? onn->value : offn->value;
              T dot = T(0);
              for (std::int64_t c = 0; c < dh; ++c)
                dot += self.grad[off0 + c] * branch[off0 + c];
              gn->grad[static_cast<std::size_t>(i * m + h)] += on ? dot : -dot;
            }
            if (on && onn->requires_grad) {
              onn->ensure_grad();
              for (std::int64_t c = 0; c < dh; ++c) onn->grad[off0 + c] += self.grad[off0 + c];
            }
            if (!on && offn->requires_grad) {
              offn->ensure_grad();
              for (std::int64_t c = 0; c < dh; ++c) offn->grad[off0 + c] += self.grad[off0 + c];
            }
          }
      },
      "gated_branch_select");
}

namespace detail {

template <class T>
Tensor<T> attention_op(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                       std::int64_t heads, int window, const char* op) {
  if (q.shape() != k.shape() || q.shape() != v.shape())
    throw shape_error(std::string(op) + ": q/k/v shapes differ");
  if (q.rank() != 2) throw shape_error(std::string(op) + ": need rank-2 [n x d] inputs");
  const std::int64_t n = q.dim(0), d = q.dim(1);
  if (heads < 1 || d % heads != 0)
    throw shape_error(std::string(op) + ": dim " + std::to_string(d) +
                      " not divisible by heads " + std::to_string(heads));
  if (window < 1) throw shape_error(std::string(op) + ": window must be >= 1");
  const int ni = static_cast<int>(n), mi = static_cast<int>(heads),
            dhi = static_cast<int>(d / heads);
  std::vector<T> out(static_cast<std::size_t>(n * d));
  auto probs = std::make_shared<std::vector<T>>(
      static_cast<std::size_t>(heads) * n * n, T(0));
  kern::attn_forward(q.data().data(), k.data().data(), v.data().data(), out.data(),
                     probs->data(), ni, mi, dhi, window);
  auto qn = q.node(), kn = k.node(), vn = v.node();
  return detail::make_op<T>(
      q.shape(), std::move(out), {qn, kn, vn},
      [qn, kn, vn, probs, ni, mi, dhi, window](TensorNode<T>& self) {
        // One fused VJP; route into whichever inputs need gradients via
        // scratch buffers so shared q=k=v tensors still accumulate correctly.
        qn->ensure_grad();
        kn->ensure_grad();
        vn->ensure_grad();
        kern::attn_backward(qn->value.data(), kn->value.data(), vn->value.data(),
                            probs->data(), self.grad.data(), qn->grad.data(),
                            kn->grad.data(), vn->grad.data(), ni, mi, dhi, window);
      },
      op);
}

}  // namespace detail

// Causal attention over the whole prefix; rows are head-blocked [n x (m*dh)].
template <class T>
Tensor<T> full_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                         std::int64_t heads) {
  const int n = static_cast<int>(q.rank() == 2 ? q.dim(0) : 0);
  return detail::attention_op(q, k, v, heads, n > 0 ? n : 1, "full_attention");
}

// Causal attention restricted to the last `window` positions (self inclusive).
template <class T>
Tensor<T> sliding_window_attention(const Tensor<T>& q, const Tensor<T>& k,
                                   const Tensor<T>& v, std::int64_t heads,
                                   std::int64_t window) {
  return detail::attention_op(q, k, v, heads, static_cast<int>(window),
                              "sliding_window_attention");
}

}  // namespace aha
