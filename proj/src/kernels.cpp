#include "mmsev/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>

namespace mmsev::kernels {

namespace {

inline void softmax_row(const double* in, double* out, std::size_t cols) {
  if (cols == 0) return;
  double mx = in[0];
  for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, in[j]);
  double total = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    out[j] = std::exp(in[j] - mx);
    total += out[j];
  }
  const double inv = 1.0 / total;
  for (std::size_t j = 0; j < cols; ++j) out[j] *= inv;
}

}  // namespace

namespace serial {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] = acc;
    }
  }
}

void softmax_rows(std::span<const double> in, std::span<double> out, std::size_t rows,
                  std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) softmax_row(in.data() + r * cols, out.data() + r * cols, cols);
}

}  // namespace serial

namespace parallel {

// Row-blocked i-p-j loop nests. Each c[i][j] still sums p = 0..k-1 in order
// starting from zero, which keeps them bit-identical to the serial kernels.

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
  const bool wide = m * k * n >= kParallelWorkThreshold;
#pragma omp parallel for schedule(static) if (wide)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* c_row = c.data() + i * n;
    std::fill(c_row, c_row + n, 0.0);
    const double* a_row = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double a_ip = a_row[p];
      const double* b_row = b.data() + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) c_row[j] += a_ip * b_row[j];
    }
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
  const bool wide = m * k * n >= kParallelWorkThreshold;
#pragma omp parallel for schedule(static) if (wide)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* c_row = c.data() + i * n;
    std::fill(c_row, c_row + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double a_pi = a[p * m + i];
      const double* b_row = b.data() + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) c_row[j] += a_pi * b_row[j];
    }
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
  const bool wide = m * k * n >= kParallelWorkThreshold;
#pragma omp parallel for schedule(static) if (wide)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* a_row = a.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* b_row = b.data() + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
      c[i * n + j] = acc;
    }
  }
}

void softmax_rows(std::span<const double> in, std::span<double> out, std::size_t rows,
                  std::size_t cols) {
  const auto n = static_cast<std::ptrdiff_t>(rows);
  const bool wide = rows * cols >= kParallelWorkThreshold;
#pragma omp parallel for schedule(static) if (wide)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    const auto off = static_cast<std::size_t>(r) * cols;
    softmax_row(in.data() + off, out.data() + off, cols);
  }
}

}  // namespace parallel

int max_threads() { return omp_get_max_threads(); }

}  // namespace mmsev::kernels
