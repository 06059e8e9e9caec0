// Times the serial reference kernels against the OpenMP variants and checks
// that both produce bitwise-identical results while it is at it. Usage:
//   bench_kernels [reps]
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <vector>

#include "aha/kernels.hpp"
#include "aha/rng.hpp"

namespace {

using clk = std::chrono::steady_clock;

double time_ms(int reps, auto&& fn) {
  fn();  // warm up
  const auto t0 = clk::now();
  for (int r = 0; r < reps; ++r) fn();
  const auto t1 = clk::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

std::vector<float> rand_vec(std::size_t n, aha::Rng& rng) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

bool bench_matmul(int size, int reps) {
  aha::Rng rng(1234 + static_cast<unsigned>(size));
  const auto a = rand_vec(static_cast<std::size_t>(size) * size, rng);
  const auto b = rand_vec(static_cast<std::size_t>(size) * size, rng);
  std::vector<float> c_serial(a.size()), c_par(a.size());
  const double t_s = time_ms(reps, [&] {
    aha::kern::serial::matmul_nn(a.data(), b.data(), c_serial.data(), size, size, size, false);
  });
  const double t_p = time_ms(reps, [&] {
    aha::kern::par::matmul_nn(a.data(), b.data(), c_par.data(), size, size, size, false);
  });
  const bool same = std::memcmp(c_serial.data(), c_par.data(), c_serial.size() * sizeof(float)) == 0;
  std::printf("matmul %4dx%-4d  serial %8.3f ms  parallel %8.3f ms  speedup %5.2fx  identical %s\n",
              size, size, t_s, t_p, t_s / t_p, same ? "yes" : "NO");
  return same;
}

bool bench_attention(int n, int m, int dh, int window, int reps) {
  aha::Rng rng(99 + static_cast<unsigned>(n * window));
  const std::size_t sz = static_cast<std::size_t>(n) * m * dh;
  const auto q = rand_vec(sz, rng), k = rand_vec(sz, rng), v = rand_vec(sz, rng);
  std::vector<float> o_serial(sz), o_par(sz);
  std::vector<float> p_serial(static_cast<std::size_t>(m) * n * n, 0.0f), p_par = p_serial;
  const double t_s = time_ms(reps, [&] {
    aha::kern::serial::attn_forward(q.data(), k.data(), v.data(), o_serial.data(),
                                    p_serial.data(), n, m, dh, window);
  });
  const double t_p = time_ms(reps, [&] {
    aha::kern::par::attn_forward(q.data(), k.data(), v.data(), o_par.data(),
                                 p_par.data(), n, m, dh, window);
  });
  bool same = std::memcmp(o_serial.data(), o_par.data(), sz * sizeof(float)) == 0 &&
              std::memcmp(p_serial.data(), p_par.data(), p_serial.size() * sizeof(float)) == 0;

  std::vector<float> dout = rand_vec(sz, rng);
  std::vector<float> dq1(sz, 0), dk1(sz, 0), dv1(sz, 0), dq2(sz, 0), dk2(sz, 0), dv2(sz, 0);
  const double tb_s = time_ms(reps, [&] {
    std::fill(dq1.begin(), dq1.end(), 0.0f);
    std::fill(dk1.begin(), dk1.end(), 0.0f);
    std::fill(dv1.begin(), dv1.end(), 0.0f);
    aha::kern::serial::attn_backward(q.data(), k.data(), v.data(), p_serial.data(), dout.data(),
                                     dq1.data(), dk1.data(), dv1.data(), n, m, dh, window);
  });
  const double tb_p = time_ms(reps, [&] {
    std::fill(dq2.begin(), dq2.end(), 0.0f);
    std::fill(dk2.begin(), dk2.end(), 0.0f);
    std::fill(dv2.begin(), dv2.end(), 0.0f);
    aha::kern::par::attn_backward(q.data(), k.data(), v.data(), p_par.data(), dout.data(),
                                  dq2.data(), dk2.data(), dv2.data(), n, m, dh, window);
  });
  same = same && std::memcmp(dq1.data(), dq2.data(), sz * sizeof(float)) == 0 &&
         std::memcmp(dk1.data(), dk2.data(), sz * sizeof(float)) == 0 &&
         std::memcmp(dv1.data(), dv2.data(), sz * sizeof(float)) == 0;
  std::printf(
      "attn n=%-4d m=%d dh=%-3d w=%-4d  fwd serial %8.3f ms parallel %8.3f ms (%4.2fx)  "
      "bwd serial %8.3f ms parallel %8.3f ms (%4.2fx)  identical %s\n",
      n, m, dh, window, t_s, t_p, t_s / t_p, tb_s, tb_p, tb_s / tb_p, same ? "yes" : "NO");
  return same;
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 5;
  bool ok = true;
  for (int size : {64, 128, 256}) ok = bench_matmul(size, reps) && ok;
  for (int n : {128, 256}) {
    ok = bench_attention(n, 4, 32, 8, reps) && ok;
    ok = bench_attention(n, 4, 32, n, reps) && ok;
  }
  if (!ok) {
    std::fprintf(stderr, "serial/parallel mismatch detected\n");
    return 1;
  }
  return 0;
}
