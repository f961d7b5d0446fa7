#include "mmsev/matrix.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "mmsev/errors.hpp"
#include "mmsev/kernels.hpp"

namespace mmsev {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError(fmt::format("matrix data length {} does not match shape {}x{}", data_.size(),
                                 rows, cols));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged initializer for Matrix::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_string() const { return fmt::format("{}x{}", rows_, cols_); }

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape(*this, other, "+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_shape(*this, other, "-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(fmt::format("{}: shape mismatch {} vs {}", what, a.shape_string(),
                                 b.shape_string()));
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError(fmt::format("matmul: cannot multiply {} by {}", a.shape_string(),
                                 b.shape_string()));
  }
  Matrix c(a.rows(), b.cols());
  kernels::parallel::gemm(a.values(), b.values(), c.values(), a.rows(), a.cols(), b.cols());
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError(fmt::format("matmul_tn: cannot multiply ({})^T by {}", a.shape_string(),
                                 b.shape_string()));
  }
  Matrix c(a.cols(), b.cols());
  kernels::parallel::gemm_tn(a.values(), b.values(), c.values(), a.cols(), a.rows(), b.cols());
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError(fmt::format("matmul_nt: cannot multiply {} by ({})^T", a.shape_string(),
                                 b.shape_string()));
  }
  Matrix c(a.rows(), b.rows());
  kernels::parallel::gemm_nt(a.values(), b.values(), c.values(), a.rows(), a.cols(), b.rows());
  return c;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix c = a;
  auto cv = c.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < cv.size(); ++i) cv[i] *= bv[i];
  return c;
}

Matrix add_row(Matrix m, const Matrix& row) {
  if (row.rows() != 1 || row.cols() != m.cols()) {
    throw ShapeError(fmt::format("add_row: cannot broadcast {} over {}", row.shape_string(),
                                 m.shape_string()));
  }
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) r[j] += row(0, j);
  }
  return m;
}

Matrix sum_rows(const Matrix& m) {
  Matrix s(1, m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) s(0, j) += m(i, j);
  return s;
}

Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  kernels::parallel::softmax_rows(m.values(), out.values(), m.rows(), m.cols());
  return out;
}

Matrix softmax_rows_backward(const Matrix& y, const Matrix& dy) {
  require_same_shape(y, dy, "softmax_rows_backward");
  Matrix dx(y.rows(), y.cols());
  for (std::size_t i = 0; i < y.rows(); ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < y.cols(); ++j) dot += y(i, j) * dy(i, j);
    for (std::size_t j = 0; j < y.cols(); ++j) dx(i, j) = y(i, j) * (dy(i, j) - dot);
  }
  return dx;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.values()[i] - b.values()[i]));
  return d;
}

}  // namespace mmsev
