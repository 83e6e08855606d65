// SPDX-License-Identifier: Apache-2.0

#include "mlot/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mlot {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::TooLargeForExact: return "TooLargeForExact";
    case ErrorKind::NumericalUnderflow: return "NumericalUnderflow";
    case ErrorKind::NumericalFailure: return "NumericalFailure";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<std::vector<double>> copy;
  copy.reserve(rows.size());
  for (const auto& r : rows) copy.emplace_back(r);
  return from_rows(copy);
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  const std::size_t cols = rows.front().size();
  Matrix m(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) {
      throw Error(ErrorKind::InvalidInput,
                  "ragged rows: row " + std::to_string(r) + " has " +
                      std::to_string(rows[r].size()) + " entries, expected " +
                      std::to_string(cols));
    }
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

bool is_permutation_of_range(std::span<const std::size_t> perm, std::size_t n) {
  if (perm.size() != n) return false;
  std::vector<bool> seen(n, false);
  for (std::size_t v : perm) {
    if (v >= n || seen[v]) return false;
    seen[v] = true;
  }
  return true;
}

bool all_finite(const Matrix& m) {
  return std::all_of(m.data().begin(), m.data().end(),
                     [](double v) { return std::isfinite(v); });
}

Matrix select_columns(const Matrix& in, std::span<const std::size_t> columns) {
  Matrix out(in.rows(), columns.size());
  for (std::size_t r = 0; r < in.rows(); ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      out(r, c) = in(r, columns[c]);
    }
  }
  return out;
}

Matrix select_rows(const Matrix& in, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), in.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto src = in.row(rows[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Matrix head_rows(const Matrix& in, std::size_t count) {
  count = std::min(count, in.rows());
  Matrix out(count, in.cols());
  std::copy_n(in.data().begin(), count * in.cols(), out.data().begin());
  return out;
}

std::vector<double> column_sums(const Matrix& m) {
  std::vector<double> sums(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) sums[c] += m(r, c);
  }
  return sums;
}

std::string shape_string(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

LogitMatrix::LogitMatrix(Matrix values) : values_(std::move(values)) {
  if (values_.rows() < 1 || values_.cols() < 2) {
    throw Error(ErrorKind::InvalidInput,
                "logit matrix needs >= 1 row and >= 2 columns, got " +
                    shape_string(values_));
  }
  if (!all_finite(values_)) {
    throw Error(ErrorKind::InvalidInput, "logit matrix has non-finite entries");
  }
}

ProbMatrix::ProbMatrix(Matrix values) : values_(std::move(values)) {
  for (std::size_t r = 0; r < values_.rows(); ++r) {
    double sum = 0.0;
    for (double p : values_.row(r)) {
      if (!(p >= 0.0 && p <= 1.0)) {
        throw Error(ErrorKind::InvalidInput,
                    "probability row " + std::to_string(r) + " has entry outside [0, 1]");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      throw Error(ErrorKind::InvalidInput,
                  "probability row " + std::to_string(r) + " does not sum to 1");
    }
  }
}

Temperature::Temperature(double value) : value_(value) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw Error(ErrorKind::InvalidConfig, "temperature must be positive and finite");
  }
}

ProbMatrix softmax_rows(const LogitMatrix& logits, Temperature temperature) {
  const Matrix& z = logits.values();
  const double inv_tau = 1.0 / temperature.value();
  Matrix out(z.rows(), z.cols());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto in = z.row(r);
    auto dst = out.row(r);
    const double max_val = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      dst[c] = std::exp((in[c] - max_val) * inv_tau);
      sum += dst[c];
    }
    for (double& v : dst) v /= sum;
  }
  return ProbMatrix(std::move(out));
}

double safe_log(double p, double floor) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw Error(ErrorKind::InvalidInput, "safe_log argument outside [0, 1]");
  }
  return std::log(std::max(p, floor));
}

Matrix softmax_backward(const Matrix& probs, const Matrix& grad_probs,
                        Temperature temperature) {
  if (!probs.same_shape(grad_probs)) {
    throw Error(ErrorKind::InvalidInput, "softmax_backward shape mismatch");
  }
  const double inv_tau = 1.0 / temperature.value();
  Matrix out(probs.rows(), probs.cols());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    auto p = probs.row(r);
    auto g = grad_probs.row(r);
    double dot = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) dot += p[c] * g[c];
    for (std::size_t c = 0; c < p.size(); ++c) {
      out(r, c) = inv_tau * p[c] * (g[c] - dot);
    }
  }
  return out;
}

}  // namespace mlot
