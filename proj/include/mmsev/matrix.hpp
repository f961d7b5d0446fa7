#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace mmsev {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix row_vector(std::span<const double> values);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& storage() const { return data_; }

  void fill(double v);
  bool all_finite() const;
  std::string shape_string() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix& a, const Matrix& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);

void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ · b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a · bᵀ
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix hadamard(const Matrix& a, const Matrix& b);

/// Adds a 1×cols row to every row of m.
Matrix add_row(Matrix m, const Matrix& row);
/// Column sums as a 1×cols matrix.
Matrix sum_rows(const Matrix& m);

Matrix softmax_rows(const Matrix& m);
/// Backward of softmax_rows given its output y and upstream gradient dy.
Matrix softmax_rows_backward(const Matrix& y, const Matrix& dy);

double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace mmsev
