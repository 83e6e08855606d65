// SPDX-License-Identifier: Apache-2.0

#include "mlot/seq_ot.hpp"

#include <algorithm>
#include <cmath>

namespace mlot {

namespace {

void require_square_nonnegative(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.empty()) {
    throw Error(ErrorKind::InvalidInput,
                std::string(what) + " must be non-empty and square, got " + shape_string(m));
  }
  for (double v : m.data()) {
    if (!std::isfinite(v) || v < 0.0) {
      throw Error(ErrorKind::InvalidInput,
                  std::string(what) + " entries must be finite and nonnegative");
    }
  }
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void check_sum(double sum, const char* axis, std::size_t index) {
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    throw Error(ErrorKind::NumericalUnderflow,
                std::string("Sinkhorn kernel ") + axis + " " + std::to_string(index) +
                    " vanished; increase lambda or rescale the cost");
  }
}

}  // namespace

CostMatrix::CostMatrix(Matrix values) : values_(std::move(values)) {
  require_square_nonnegative(values_, "cost matrix");
}

TransportPlan::TransportPlan(Matrix values) : values_(std::move(values)) {
  require_square_nonnegative(values_, "transport plan");
}

std::vector<double> TransportPlan::row_sums() const {
  std::vector<double> sums(size(), 0.0);
  for (std::size_t i = 0; i < size(); ++i) {
    for (double v : values_.row(i)) sums[i] += v;
  }
  return sums;
}

std::vector<double> TransportPlan::col_sums() const { return column_sums(values_); }

double TransportPlan::max_marginal_error() const {
  double worst = 0.0;
  for (double s : row_sums()) worst = std::max(worst, std::abs(s - 1.0));
  for (double s : col_sums()) worst = std::max(worst, std::abs(s - 1.0));
  return worst;
}

void SinkhornConfig::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorKind::InvalidConfig, "Sinkhorn lambda must be positive and finite");
  }
  if (iterations < 1) {
    throw Error(ErrorKind::InvalidConfig, "Sinkhorn needs at least one iteration");
  }
}

CostMatrix seq_cost_matrix(const AlignedPair& pair) {
  const Matrix& t = pair.teacher();
  const Matrix& s = pair.student();
  const std::size_t n = pair.tokens();
  Matrix c(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    auto t_row = t.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      auto s_row = s.row(j);
      double dist = 0.0;
      for (std::size_t l = 0; l < t_row.size(); ++l) dist += std::abs(t_row[l] - s_row[l]);
      c(i, j) = dist;
    }
  }
  return CostMatrix(std::move(c));
}

TransportPlan sinkhorn_plan(const CostMatrix& cost, const SinkhornConfig& config) {
  config.validate();
  const Matrix& c = cost.values();
  const std::size_t n = cost.size();

  double scale = 1.0;
  if (config.rescale_cost) {
    const double max_cost = *std::max_element(c.data().begin(), c.data().end());
    if (max_cost > 0.0) scale = 1.0 / max_cost;
  }

  Matrix k(n, n);
  for (std::size_t i = 0; i < c.data().size(); ++i) {
    k.data()[i] = std::exp(-c.data()[i] * scale / config.lambda);
  }

  std::vector<double> col(n);
  for (std::size_t iter = 0; iter < config.iterations; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      auto row = k.row(i);
      double sum = 0.0;
      for (double v : row) sum += v;
      check_sum(sum, "row", i);
      for (double& v : row) v /= sum;
    }
    std::fill(col.begin(), col.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) col[j] += k(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) check_sum(col[j], "column", j);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) k(i, j) /= col[j];
    }
  }
  return TransportPlan(std::move(k));
}

double sd_loss(const CostMatrix& cost, const TransportPlan& plan) {
  if (cost.size() != plan.size()) {
    throw Error(ErrorKind::InvalidInput, "cost and plan sizes differ");
  }
  double total = 0.0;
  const auto c = cost.values().data();
  const auto p = plan.values().data();
  for (std::size_t i = 0; i < c.size(); ++i) total += p[i] * c[i];
  return total;
}

Matrix sd_grad(const AlignedPair& pair, const TransportPlan& plan) {
  if (plan.size() != pair.tokens()) {
    throw Error(ErrorKind::InvalidInput, "plan size does not match token count");
  }
  const Matrix& t = pair.teacher();
  const Matrix& s = pair.student();
  const Matrix& p = plan.values();
  Matrix grad(s.rows(), s.cols());
  for (std::size_t j = 0; j < s.rows(); ++j) {
    for (std::size_t l = 0; l < s.cols(); ++l) {
      double g = 0.0;
      for (std::size_t i = 0; i < t.rows(); ++i) g += p(i, j) * sign(s(j, l) - t(i, l));
      grad(j, l) = g;
    }
  }
  return grad;
}

}  // namespace mlot
