#include "aha/kernels.hpp"
#include "kernels_detail.hpp"

// OpenMP variants. Work is split across rows / (head, position) cells; every
// output element is still accumulated serially by one thread, so the results
// are bit-identical to the serial reference for any thread count.

namespace aha::kern::par {

namespace {
// Below this many multiply-adds the fork/join overhead dominates.
constexpr long kParallelGrain = 16384;
}

template <class T>
void matmul_nn(const T* a, const T* b, T* c, int M, int K, int N,
               bool accumulate) {
  if (static_cast<long>(M) * K * N < kParallelGrain || M == 1) {
    serial::matmul_nn(a, b, c, M, K, N, accumulate);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int i = 0; i < M; ++i)
    detail::matmul_nn_row(a + static_cast<std::size_t>(i) * K, b,
                          c + static_cast<std::size_t>(i) * N, K, N, accumulate);
}

template <class T>
void matmul_nt(const T* a, const T* b, T* c, int M, int K, int N,
               bool accumulate) {
  if (static_cast<long>(M) * K * N < kParallelGrain || M == 1) {
    serial::matmul_nt(a, b, c, M, K, N, accumulate);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int i = 0; i < M; ++i)
    detail::matmul_nt_row(a + static_cast<std::size_t>(i) * K, b,
                          c + static_cast<std::size_t>(i) * N, K, N, accumulate);
}

template <class T>
void matmul_tn(const T* a, const T* b, T* c, int M, int K, int N,
               bool accumulate) {
  if (static_cast<long>(M) * K * N < kParallelGrain || M == 1) {
    serial::matmul_tn(a, b, c, M, K, N, accumulate);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int i = 0; i < M; ++i)
    detail::matmul_tn_row(a, b, c + static_cast<std::size_t>(i) * N, i, M, K, N,
                          accumulate);
}

template <class T>
void attn_forward(const T* q, const T* k, const T* v, T* out, T* probs, int n,
                  int m, int dh, int window) {
  if (static_cast<long>(m) * n * n * dh < kParallelGrain) {
    serial::attn_forward(q, k, v, out, probs, n, m, dh, window);
    return;
  }
#pragma omp parallel for collapse(2) schedule(static)
  for (int h = 0; h < m; ++h)
    for (int i = 0; i < n; ++i)
      detail::attn_forward_one(q, k, v, out, probs, n, m, dh, window, h, i);
}

template <class T>
void attn_backward(const T* q, const T* k, const T* v, const T* probs,
                   const T* dout, T* dq, T* dk, T* dv, int n, int m, int dh,
                   int window) {
  if (static_cast<long>(m) * n * n * dh < kParallelGrain) {
    serial::attn_backward(q, k, v, probs, dout, dq, dk, dv, n, m, dh, window);
    return;
  }
  std::vector<T> dscores(static_cast<std::size_t>(m) * n * n, T(0));
#pragma omp parallel for collapse(2) schedule(static)
  for (int h = 0; h < m; ++h)
    for (int i = 0; i < n; ++i)
      detail::attn_backward_query(k, v, probs, dout, dq, dscores.data(), n,
                                  m, dh, window, h, i);
#pragma omp parallel for collapse(2) schedule(static)
  for (int h = 0; h < m; ++h)
    for (int j = 0; j < n; ++j)
      detail::attn_backward_key(q, probs, dout, dscores.data(), dk, dv, n, m,
                                dh, window, h, j);
}

template void matmul_nn<float>(const float*, const float*, float*, int, int, int, bool);
template void matmul_nn<double>(const double*, const double*, double*, int, int, int, bool);
template void matmul_nt<float>(const float*, const float*, float*, int, int, int, bool);
template void matmul_nt<double>(const double*, const double*, double*, int, int, int, bool);
template void matmul_tn<float>(const float*, const float*, float*, int, int, int, bool);
template void matmul_tn<double>(const double*, const double*, double*, int, int, int, bool);
template void attn_forward<float>(const float*, const float*, const float*, float*, float*, int, int, int, int);
template void attn_forward<double>(const double*, const double*, const double*, double*, double*, int, int, int, int);
template void attn_backward<float>(const float*, const float*, const float*, const float*, const float*, float*, float*, float*, int, int, int, int);
template void attn_backward<double>(const double*, const double*, const double*, const double*, const double*, double*, double*, double*, int, int, int, int);

}  // namespace aha::kern::par
