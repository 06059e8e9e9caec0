#include <cmath>
#include <cstring>
#include <vector>

#include "aha/kernels.hpp"
#include "aha/rng.hpp"
#include "doctest.h"

namespace {

std::vector<double> rand_vec(std::size_t n, aha::Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

// Independent reference: plain triple loop, no blocking, no reordering.
void naive_matmul(const double* a, const double* b, double* c, int M, int K, int N) {
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < N; ++j) {
      double s = 0.0;
      for (int k = 0; k < K; ++k) s += a[i * K + k] * b[k * N + j];
      c[i * N + j] = s;
    }
}

// Independent reference for windowed causal attention, one (head, query) at a
// time with an explicit softmax.
void naive_attention(const double* q, const double* k, const double* v, double* out,
                     int n, int m, int dh, int window) {
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const int d = m * dh;
  for (int h = 0; h < m; ++h)
    for (int i = 0; i < n; ++i) {
      const int lo = std::max(0, i - window + 1);
      std::vector<double> scores;
      for (int j = lo; j <= i; ++j) {
        double s = 0.0;
        for (int c = 0; c < dh; ++c) s += q[i * d + h * dh + c] * k[j * d + h * dh + c];
        scores.push_back(s * inv_sqrt);
      }
      double maxv = scores[0];
      for (double s : scores) maxv = std::max(maxv, s);
      double denom = 0.0;
      for (auto& s : scores) {
        s = std::exp(s - maxv);
        denom += s;
      }
      for (int c = 0; c < dh; ++c) {
        double acc = 0.0;
        for (int j = lo; j <= i; ++j)
          acc += (scores[static_cast<std::size_t>(j - lo)] / denom) * v[j * d + h * dh + c];
        out[i * d + h * dh + c] = acc;
      }
    }
}

}  // namespace

TEST_CASE("matmul variants against a naive triple loop") {
  aha::Rng rng(100);
  const int M = 7, K = 5, N = 9;
  auto a = rand_vec(static_cast<std::size_t>(M * K), rng);
  auto b = rand_vec(static_cast<std::size_t>(K * N), rng);
  std::vector<double> want(static_cast<std::size_t>(M * N));
  naive_matmul(a.data(), b.data(), want.data(), M, K, N);

  std::vector<double> got(static_cast<std::size_t>(M * N), 0.0);
  aha::kern::serial::matmul_nn(a.data(), b.data(), got.data(), M, K, N, false);
  for (std::size_t i = 0; i < got.size(); ++i)
    CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

  // nt: feed b transposed, expect the same product.
  std::vector<double> bt(static_cast<std::size_t>(N * K));
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < N; ++j) bt[j * K + k] = b[k * N + j];
  std::fill(got.begin(), got.end(), 0.0);
  aha::kern::serial::matmul_nt(a.data(), bt.data(), got.data(), M, K, N, false);
  for (std::size_t i = 0; i < got.size(); ++i)
    CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

  // tn: feed a transposed, expect the same product.
  std::vector<double> at(static_cast<std::size_t>(K * M));
  for (int i = 0; i < M; ++i)
    for (int k = 0; k < K; ++k) at[k * M + i] = a[i * K + k];
  std::fill(got.begin(), got.end(), 0.0);
  aha::kern::serial::matmul_tn(at.data(), b.data(), got.data(), M, K, N, false);
  for (std::size_t i = 0; i < got.size(); ++i)
    CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("matmul accumulate flag adds into the output") {
  aha::Rng rng(101);
  const int M = 3, K = 4, N = 2;
  auto a = rand_vec(static_cast<std::size_t>(M * K), rng);
  auto b = rand_vec(static_cast<std::size_t>(K * N), rng);
  std::vector<double> base(static_cast<std::size_t>(M * N), 2.5);
  std::vector<double> got = base;
  aha::kern::serial::matmul_nn(a.data(), b.data(), got.data(), M, K, N, true);
  std::vector<double> prod(static_cast<std::size_t>(M * N));
  naive_matmul(a.data(), b.data(), prod.data(), M, K, N);
  for (std::size_t i = 0; i < got.size(); ++i)
    CHECK(got[i] == doctest::Approx(base[i] + prod[i]).epsilon(1e-12));
}

TEST_CASE("attention forward against the naive reference") {
  aha::Rng rng(102);
  const int n = 12, m = 3, dh = 4;
  auto q = rand_vec(static_cast<std::size_t>(n * m * dh), rng);
  auto k = rand_vec(static_cast<std::size_t>(n * m * dh), rng);
  auto v = rand_vec(static_cast<std::size_t>(n * m * dh), rng);
  for (int window : {1, 3, 8, n, n + 5}) {
    std::vector<double> want(q.size());
    naive_attention(q.data(), k.data(), v.data(), want.data(), n, m, dh, window);
    std::vector<double> got(q.size());
    std::vector<double> probs(static_cast<std::size_t>(m * n * n), 0.0);
    aha::kern::serial::attn_forward(q.data(), k.data(), v.data(), got.data(), probs.data(),
                                    n, m, dh, window);
    for (std::size_t i = 0; i < got.size(); ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-10));
    // Probability rows sum to one over the attended span.
    for (int h = 0; h < m; ++h)
      for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += probs[static_cast<std::size_t>((h * n + i) * n + j)];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-10));
      }
  }
}

TEST_CASE("serial and parallel kernels are bitwise identical") {
  aha::Rng rng(103);
  const int n = 40, m = 2, dh = 8;
  auto q = rand_vec(static_cast<std::size_t>(n * m * dh), rng);
  auto k = rand_vec(static_cast<std::size_t>(n * m * dh), rng);
  auto v = rand_vec(static_cast<std::size_t>(n * m * dh), rng);

  const int M = 33, K = 17, N = 29;
  auto a = rand_vec(static_cast<std::size_t>(M * K), rng);
  auto b = rand_vec(static_cast<std::size_t>(K * N), rng);

  std::vector<double> c1(static_cast<std::size_t>(M * N), 0.0), c2 = c1;
  aha::kern::serial::matmul_nn(a.data(), b.data(), c1.data(), M, K, N, false);
  aha::kern::par::matmul_nn(a.data(), b.data(), c2.data(), M, K, N, false);
  CHECK(std::memcmp(c1.data(), c2.data(), c1.size() * sizeof(double)) == 0);

  for (int window : {4, n}) {
    std::vector<double> o1(q.size()), o2(q.size());
    std::vector<double> p1(static_cast<std::size_t>(m * n * n), 0.0), p2 = p1;
    aha::kern::serial::attn_forward(q.data(), k.data(), v.data(), o1.data(), p1.data(),
                                    n, m, dh, window);
    aha::kern::par::attn_forward(q.data(), k.data(), v.data(), o2.data(), p2.data(),
                                 n, m, dh, window);
    CHECK(std::memcmp(o1.data(), o2.data(), o1.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(p1.data(), p2.data(), p1.size() * sizeof(double)) == 0);

    std::vector<double> dout = rand_vec(q.size(), rng);
    std::vector<double> dq1(q.size(), 0.0), dk1(q.size(), 0.0), dv1(q.size(), 0.0);
    std::vector<double> dq2(q.size(), 0.0), dk2(q.size(), 0.0), dv2(q.size(), 0.0);
    aha::kern::serial::attn_backward(q.data(), k.data(), v.data(), p1.data(), dout.data(),
                                     dq1.data(), dk1.data(), dv1.data(), n, m, dh, window);
    aha::kern::par::attn_backward(q.data(), k.data(), v.data(), p2.data(), dout.data(),
                                  dq2.data(), dk2.data(), dv2.data(), n, m, dh, window);
    CHECK(std::memcmp(dq1.data(), dq2.data(), dq1.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(dk1.data(), dk2.data(), dk1.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(dv1.data(), dv2.data(), dv1.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("window one copies values, window >= n equals full") {
  aha::Rng rng(104);
  const int n = 9, m = 2, dh = 5;
  auto q = rand_vec(static_cast<std::size_t>(n * m * dh), rng);
  auto k = rand_vec(static_cast<std::size_t>(n * m * dh), rng);
  auto v = rand_vec(static_cast<std::size_t>(n * m * dh), rng);
  std::vector<double> out(q.size());
  std::vector<double> probs(static_cast<std::size_t>(m * n * n), 0.0);
  aha::kern::attn_forward(q.data(), k.data(), v.data(), out.data(), probs.data(), n, m, dh, 1);
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(out[i] == doctest::Approx(v[i]).epsilon(1e-12));

  std::vector<double> full(q.size()), wide(q.size());
  std::vector<double> pf(probs.size(), 0.0), pw(probs.size(), 0.0);
  aha::kern::attn_forward(q.data(), k.data(), v.data(), full.data(), pf.data(), n, m, dh, n);
  aha::kern::attn_forward(q.data(), k.data(), v.data(), wide.data(), pw.data(), n, m, dh, 3 * n);
  CHECK(std::memcmp(full.data(), wide.data(), full.size() * sizeof(double)) == 0);
}
