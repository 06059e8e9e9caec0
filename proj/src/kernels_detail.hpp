#pragma once

#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

// Per-element loop bodies shared by the serial and the OpenMP kernel variants.
// Each output element is accumulated by exactly one caller in a fixed order,
// which is what makes both variants bit-identical and run-to-run stable.

namespace aha::kern::detail {

template <class T>
inline void matmul_nn_row(const T* a_row, const T* b, T* c_row, int K, int N,
                          bool accumulate) {
  if (!accumulate) {
    for (int j = 0; j < N; ++j) c_row[j] = T(0);
  }
  for (int k = 0; k < K; ++k) {
    const T aik = a_row[k];
    const T* b_row = b + static_cast<std::size_t>(k) * N;
    for (int j = 0; j < N; ++j) c_row[j] += aik * b_row[j];
  }
}

template <class T>
inline void matmul_nt_row(const T* a_row, const T* b, T* c_row, int K, int N,
                          bool accumulate) {
  for (int j = 0; j < N; ++j) {
    const T* b_row = b + static_cast<std::size_t>(j) * K;
    T acc = T(0);
    for (int k = 0; k < K; ++k) acc += a_row[k] * b_row[k];
    if (accumulate)
      c_row[j] += acc;
    else
      c_row[j] = acc;
  }
}

template <class T>
inline void matmul_tn_row(const T* a, const T* b, T* c_row, int i, int M, int K,
                          int N, bool accumulate) {
  if (!accumulate) {
    for (int j = 0; j < N; ++j) c_row[j] = T(0);
  }
  for (int k = 0; k < K; ++k) {
    const T aki = a[static_cast<std::size_t>(k) * M + i];
    const T* b_row = b + static_cast<std::size_t>(k) * N;
    for (int j = 0; j < N; ++j) c_row[j] += aki * b_row[j];
  }
}

inline int attn_window_start(int i, int window) {
  return i - window + 1 > 0 ? i - window + 1 : 0;
}

// One (head, query position) cell of windowed causal attention.
template <class T>
inline void attn_forward_one(const T* q, const T* k, const T* v, T* out,
                             T* probs, int n, int m, int dh, int window, int h,
                             int i) {
  const T inv_sqrt_dh = T(1) / std::sqrt(static_cast<T>(dh));
  const std::size_t row_stride = static_cast<std::size_t>(m) * dh;
  const T* qi = q + static_cast<std::size_t>(i) * row_stride + static_cast<std::size_t>(h) * dh;
  T* prow = probs + (static_cast<std::size_t>(h) * n + i) * n;
  const int start = attn_window_start(i, window);
  for (int j = 0; j < n; ++j) prow[j] = T(0);  // weights outside the range stay 0

  T maxv = -std::numeric_limits<T>::infinity();
  for (int j = start; j <= i; ++j) {
    const T* kj = k + static_cast<std::size_t>(j) * row_stride + static_cast<std::size_t>(h) * dh;
    T s = T(0);
    for (int c = 0; c < dh; ++c) s += qi[c] * kj[c];
    s *= inv_sqrt_dh;
    prow[j] = s;  // raw score, normalized below
    if (s > maxv) maxv = s;
  }
  T denom = T(0);
  for (int j = start; j <= i; ++j) {
    const T e = std::exp(prow[j] - maxv);
    prow[j] = e;
    denom += e;
  }
  const T inv_denom = T(1) / denom;
  T* oi = out + static_cast<std::size_t>(i) * row_stride + static_cast<std::size_t>(h) * dh;
  for (int c = 0; c < dh; ++c) oi[c] = T(0);
  for (int j = start; j <= i; ++j) {
    const T p = prow[j] * inv_denom;
    prow[j] = p;
    const T* vj = v + static_cast<std::size_t>(j) * row_stride + static_cast<std::size_t>(h) * dh;
    for (int c = 0; c < dh; ++c) oi[c] += p * vj[c];
  }
}

// Backward stage 1, one (head, query position): softmax VJP -> dscores row and
// the query gradient.
template <class T>
inline void attn_backward_query(const T* k, const T* v, const T* probs,
                                const T* dout, T* dq, T* dscores,
                                int n, int m, int dh, int window, int h, int i) {
  const T inv_sqrt_dh = T(1) / std::sqrt(static_cast<T>(dh));
  const std::size_t row_stride = static_cast<std::size_t>(m) * dh;
  const int start = attn_window_start(i, window);
  const T* prow = probs + (static_cast<std::size_t>(h) * n + i) * n;
  T* dsrow = dscores + (static_cast<std::size_t>(h) * n + i) * n;
  const T* doi = dout + static_cast<std::size_t>(i) * row_stride + static_cast<std::size_t>(h) * dh;

  T delta = T(0);
  for (int j = start; j <= i; ++j) {
    const T* vj = v + static_cast<std::size_t>(j) * row_stride + static_cast<std::size_t>(h) * dh;
    T dp = T(0);
    for (int c = 0; c < dh; ++c) dp += doi[c] * vj[c];
    dsrow[j] = dp;
    delta += prow[j] * dp;
  }
  for (int j = start; j <= i; ++j) dsrow[j] = prow[j] * (dsrow[j] - delta);

  T* dqi = dq + static_cast<std::size_t>(i) * row_stride + static_cast<std::size_t>(h) * dh;
  for (int j = start; j <= i; ++j) {
    const T ds = dsrow[j] * inv_sqrt_dh;
    const T* kj = k + static_cast<std::size_t>(j) * row_stride + static_cast<std::size_t>(h) * dh;
    for (int c = 0; c < dh; ++c) dqi[c] += ds * kj[c];
  }
}

// Backward stage 2, one (head, key position): accumulate dk and dv over the
// query positions whose window covers j.
template <class T>
inline void attn_backward_key(const T* q, const T* probs, const T* dout,
                              const T* dscores, T* dk, T* dv, int n, int m,
                              int dh, int window, int h, int j) {
  const T inv_sqrt_dh = T(1) / std::sqrt(static_cast<T>(dh));
  const std::size_t row_stride = static_cast<std::size_t>(m) * dh;
  T* dkj = dk + static_cast<std::size_t>(j) * row_stride + static_cast<std::size_t>(h) * dh;
  T* dvj = dv + static_cast<std::size_t>(j) * row_stride + static_cast<std::size_t>(h) * dh;
  const int i_end = window >= n ? n - 1 : (j + window - 1 < n - 1 ? j + window - 1 : n - 1);
  for (int i = j; i <= i_end; ++i) {
    const T p = probs[(static_cast<std::size_t>(h) * n + i) * n + j];
    const T ds = dscores[(static_cast<std::size_t>(h) * n + i) * n + j] * inv_sqrt_dh;
    const T* qi = q + static_cast<std::size_t>(i) * row_stride + static_cast<std::size_t>(h) * dh;
    const T* doi = dout + static_cast<std::size_t>(i) * row_stride + static_cast<std::size_t>(h) * dh;
    for (int c = 0; c < dh; ++c) {
      dkj[c] += ds * qi[c];
      dvj[c] += p * doi[c];
    }
  }
}

}  // namespace aha::kern::detail
