// SPDX-License-Identifier: Apache-2.0
//
// Dense matrices, probability types and the temperature softmax shared by
// every loss in the library.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mlot {

enum class ErrorKind {
  InvalidInput,
  InvalidConfig,
  TooLargeForExact,
  NumericalUnderflow,
  NumericalFailure,
  Io,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  // Every inner list must have the same length.
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Index vector where entry i names the source column placed at position i.
using Permutation = std::vector<std::size_t>;

bool is_permutation_of_range(std::span<const std::size_t> perm, std::size_t n);

bool all_finite(const Matrix& m);

// out(:, i) = in(:, columns[i]).
Matrix select_columns(const Matrix& in, std::span<const std::size_t> columns);

// out(i, :) = in(rows[i], :).
Matrix select_rows(const Matrix& in, std::span<const std::size_t> rows);

// First `count` rows of `in`.
Matrix head_rows(const Matrix& in, std::size_t count);

std::vector<double> column_sums(const Matrix& m);

std::string shape_string(const Matrix& m);

// Raw model outputs, one row per token. Finite, at least one row and two
// columns.
class LogitMatrix {
 public:
  explicit LogitMatrix(Matrix values);

  const Matrix& values() const noexcept { return values_; }
  std::size_t rows() const noexcept { return values_.rows(); }
  std::size_t cols() const noexcept { return values_.cols(); }

 private:
  Matrix values_;
};

// Row-stochastic matrix: entries in [0, 1], rows sum to 1 within 1e-9.
class ProbMatrix {
 public:
  static constexpr double kRowSumTolerance = 1e-9;

  explicit ProbMatrix(Matrix values);

  const Matrix& values() const noexcept { return values_; }
  std::size_t rows() const noexcept { return values_.rows(); }
  std::size_t cols() const noexcept { return values_.cols(); }

 private:
  Matrix values_;
};

class Temperature {
 public:
  explicit Temperature(double value);

  double value() const noexcept { return value_; }

 private:
  double value_;
};

// Row-wise exp(z / tau) / sum exp(z / tau), with the row max subtracted first.
ProbMatrix softmax_rows(const LogitMatrix& logits, Temperature temperature);

inline constexpr double kProbFloor = 1e-12;

// ln(max(p, floor)). Throws InvalidInput when p is outside [0, 1].
double safe_log(double p, double floor = kProbFloor);

// Backpropagates dL/dprobs through a temperature softmax. `probs` is the
// softmax output; the result is dL/dlogits with the same shape.
Matrix softmax_backward(const Matrix& probs, const Matrix& grad_probs,
                        Temperature temperature);

}  // namespace mlot
