// SPDX-License-Identifier: Apache-2.0

#include "mlot/token_ot.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mlot {

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// Indices of `row` sorted by descending value, ties by ascending index. Indices
// >= row.size() stand for zero padding up to `width`.
std::vector<std::size_t> descending_order(std::span<const double> row, std::size_t width) {
  std::vector<std::size_t> order(width);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto value = [&](std::size_t i) { return i < row.size() ? row[i] : 0.0; };
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return value(a) > value(b); });
  return order;
}

}  // namespace

TokenLossGrad had_loss(const AlignedPair& pair) {
  const Matrix& t = pair.teacher();
  const Matrix& s = pair.student();
  TokenLossGrad out{0.0, Matrix(s.rows(), s.cols())};
  for (std::size_t r = 0; r < s.rows(); ++r) {
    for (std::size_t c = 0; c < s.cols(); ++c) {
      const double diff = s(r, c) - t(r, c);
      out.value += std::abs(diff);
      out.grad(r, c) = sign(diff);
    }
  }
  return out;
}

TokenLossGrad sl_loss(const AlignedPair& pair, double floor) {
  const Matrix& t = pair.teacher();
  const Matrix& s = pair.student();
  TokenLossGrad out{0.0, Matrix(s.rows(), s.cols())};
  for (std::size_t r = 0; r < s.rows(); ++r) {
    for (std::size_t c = 0; c < s.cols(); ++c) {
      out.value -= t(r, c) * safe_log(s(r, c), floor);
      out.grad(r, c) = -t(r, c) / std::max(s(r, c), floor);
    }
  }
  return out;
}

TokenLossGrad uld_loss_grad(const Matrix& teacher, const Matrix& student) {
  if (teacher.rows() != student.rows()) {
    throw Error(ErrorKind::InvalidInput,
                "uld loss needs equal token counts, got " + shape_string(teacher) +
                    " and " + shape_string(student));
  }
  const std::size_t width = std::max(teacher.cols(), student.cols());
  TokenLossGrad out{0.0, Matrix(student.rows(), student.cols())};
  for (std::size_t r = 0; r < teacher.rows(); ++r) {
    auto t_row = teacher.row(r);
    auto s_row = student.row(r);
    const auto t_order = descending_order(t_row, width);
    const auto s_order = descending_order(s_row, width);
    for (std::size_t i = 0; i < width; ++i) {
      const double tv = t_order[i] < t_row.size() ? t_row[t_order[i]] : 0.0;
      const double sv = s_order[i] < s_row.size() ? s_row[s_order[i]] : 0.0;
      out.value += std::abs(tv - sv);
      if (s_order[i] < s_row.size()) out.grad(r, s_order[i]) = sign(sv - tv);
    }
  }
  return out;
}

double uld_loss(const Matrix& teacher, const Matrix& student) {
  return uld_loss_grad(teacher, student).value;
}

}  // namespace mlot
