#pragma once

// Dense kernels in two flavours: `serial` is the plain reference used by the
// tests, `parallel` splits output rows across OpenMP threads. Both accumulate
// every output element in the same order, so results are bit-identical.

#include <cstddef>
#include <span>

namespace mmsev::kernels {

/// Work (m·k·n multiply-adds) below which the parallel kernels stay on one thread.
inline constexpr std::size_t kParallelWorkThreshold = 1u << 15;

namespace serial {

/// c[m×n] = a[m×k] · b[k×n]
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n);
/// c[m×n] = a[k×m]ᵀ · b[k×n]
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
/// c[m×n] = a[m×k] · b[n×k]ᵀ
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void softmax_rows(std::span<const double> in, std::span<double> out, std::size_t rows,
                  std::size_t cols);

}  // namespace serial

namespace parallel {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void softmax_rows(std::span<const double> in, std::span<double> out, std::size_t rows,
                  std::size_t cols);

}  // namespace parallel

int max_threads();

}  // namespace mmsev::kernels
