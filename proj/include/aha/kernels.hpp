#pragma once

#include <cstdint>

namespace aha::kern {

// Execution policy for the heavy kernels. Both variants compute every output
// element with the same (fixed) summation order, so results are bit-identical
// between policies and across thread counts. The serial variants are the
// reference implementations used by the tests and the benchmark.
enum class Exec { Serial, Parallel };

Exec& exec_policy();  // process-global, defaults to Parallel

namespace serial {

// c[M x N] (+)= a[M x K] * b[K x N]
template <class T>
void matmul_nn(const T* a, const T* b, T* c, int M, int K, int N, bool accumulate);

// c[M x N] (+)= a[M x K] * b[N x K]^T
template <class T>
void matmul_nt(const T* a, const T* b, T* c, int M, int K, int N, bool accumulate);

// c[M x N] (+)= a[K x M]^T * b[K x N]
template <class T>
void matmul_tn(const T* a, const T* b, T* c, int M, int K, int N, bool accumulate);

// Causal windowed attention over head-blocked rows. q,k,v,out are [n][m][dh]
// flattened; position i attends to j in [max(0, i-window+1), i]. window >= n
// gives full causal attention. probs is [m][n][n] flattened and receives the
// attention weights (zero outside the attended range).
template <class T>
void attn_forward(const T* q, const T* k, const T* v, T* out, T* probs, int n,
                  int m, int dh, int window);

// Gradients of attn_forward. dq,dk,dv are accumulated into (+=).
template <class T>
void attn_backward(const T* q, const T* k, const T* v, const T* probs,
                   const T* dout, T* dq, T* dk, T* dv, int n, int m, int dh,
                   int window);

}  // namespace serial

namespace par {

template <class T>
void matmul_nn(const T* a, const T* b, T* c, int M, int K, int N, bool accumulate);
template <class T>
void matmul_nt(const T* a, const T* b, T* c, int M, int K, int N, bool accumulate);
template <class T>
void matmul_tn(const T* a, const T* b, T* c, int M, int K, int N, bool accumulate);
template <class T>
void attn_forward(const T* q, const T* k, const T* v, T* out, T* probs, int n,
                  int m, int dh, int window);
template <class T>
void attn_backward(const T* q, const T* k, const T* v, const T* probs,
                   const T* dout, T* dq, T* dk, T* dv, int n, int m, int dh,
                   int window);

}  // namespace par

// Dispatch on the active policy.
template <class T>
inline void matmul_nn(const T* a, const T* b, T* c, int M, int K, int N,
                      bool accumulate = false) {
  if (exec_policy() == Exec::Parallel)
    par::matmul_nn(a, b, c, M, K, N, accumulate);
  else
    serial::matmul_nn(a, b, c, M, K, N, accumulate);
}

template <class T>
inline void matmul_nt(const T* a, const T* b, T* c, int M, int K, int N,
                      bool accumulate = false) {
  if (exec_policy() == Exec::Parallel)
    par::matmul_nt(a, b, c, M, K, N, accumulate);
  else
    serial::matmul_nt(a, b, c, M, K, N, accumulate);
}

template <class T>
inline void matmul_tn(const T* a, const T* b, T* c, int M, int K, int N,
                      bool accumulate = false) {
  if (exec_policy() == Exec::Parallel)
    par::matmul_tn(a, b, c, M, K, N, accumulate);
  else
    serial::matmul_tn(a, b, c, M, K, N, accumulate);
}

template <class T>
inline void attn_forward(const T* q, const T* k, const T* v, T* out, T* probs,
                         int n, int m, int dh, int window) {
  if (exec_policy() == Exec::Parallel)
    par::attn_forward(q, k, v, out, probs, n, m, dh, window);
  else
    serial::attn_forward(q, k, v, out, probs, n, m, dh, window);
}

template <class T>
inline void attn_backward(const T* q, const T* k, const T* v, const T* probs,
                          const T* dout, T* dq, T* dk, T* dv, int n, int m,
                          int dh, int window) {
  if (exec_policy() == Exec::Parallel)
    par::attn_backward(q, k, v, probs, dout, dq, dk, dv, n, m, dh, window);
  else
    serial::attn_backward(q, k, v, probs, dout, dq, dk, dv, n, m, dh, window);
}

}  // namespace aha::kern
