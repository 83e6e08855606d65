// SPDX-License-Identifier: Apache-2.0

#include "mlot/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mlot {

Matrix ExactOTResult::plan_matrix() const {
  Matrix p(plan.size(), plan.size());
  for (std::size_t i = 0; i < plan.size(); ++i) p(i, plan[i]) = 1.0;
  return p;
}

double permutation_cost(const Matrix& cost, std::span<const std::size_t> plan) {
  double total = 0.0;
  for (std::size_t i = 0; i < plan.size(); ++i) total += cost(i, plan[i]);
  return total;
}

namespace {

void require_square_finite(const Matrix& cost) {
  if (cost.rows() != cost.cols() || cost.empty()) {
    throw Error(ErrorKind::InvalidInput,
                "exact OT needs a non-empty square cost, got " + shape_string(cost));
  }
  if (!all_finite(cost)) {
    throw Error(ErrorKind::InvalidInput, "cost matrix has non-finite entries");
  }
}

ExactOTResult brute_force(const Matrix& cost) {
  const std::size_t n = cost.rows();
  Permutation perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  ExactOTResult best{std::numeric_limits<double>::infinity(), perm, ExactMethod::BruteForce};
  // Lexicographic order with a strict comparison keeps the smallest plan on ties.
  do {
    const double value = permutation_cost(cost, perm);
    if (value < best.value) {
      best.value = value;
      best.plan = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

ExactOTResult exact_ot(const Matrix& cost, ExactMethod method) {
  require_square_finite(cost);
  const std::size_t n = cost.rows();
  if (method == ExactMethod::BruteForce) {
    if (n > kMaxBruteForce) {
      throw Error(ErrorKind::TooLargeForExact,
                  "brute-force exact OT is limited to n <= " +
                      std::to_string(kMaxBruteForce) + ", got " + std::to_string(n));
    }
    return brute_force(cost);
  }
  if (n > kMaxAssignment) {
    throw Error(ErrorKind::TooLargeForExact,
                "assignment exact OT is limited to n <= " +
                    std::to_string(kMaxAssignment) + ", got " + std::to_string(n));
  }
  AssignmentResult a = solve_assignment(cost);
  return {permutation_cost(cost, a.row_to_col), std::move(a.row_to_col),
          ExactMethod::Assignment};
}

AssignmentResult solve_assignment(const Matrix& cost) {
  const std::size_t rows = cost.rows();
  const std::size_t cols = cost.cols();
  if (rows > cols) {
    throw Error(ErrorKind::InvalidInput,
                "assignment needs rows <= cols, got " + shape_string(cost));
  }
  if (!all_finite(cost)) {
    throw Error(ErrorKind::InvalidInput, "assignment cost has non-finite entries");
  }
  if (rows == 0) return {};

  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based potentials; index 0 of the column arrays is a virtual column.
  std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0);
  std::vector<std::size_t> owner(cols + 1, 0), way(cols + 1, 0);

  for (std::size_t i = 1; i <= rows; ++i) {
    owner[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(cols + 1, kInf);
    std::vector<char> used(cols + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = owner[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= cols; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= cols; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  AssignmentResult result;
  result.row_to_col.assign(rows, 0);
  for (std::size_t j = 1; j <= cols; ++j) {
    if (owner[j] != 0) result.row_to_col[owner[j] - 1] = j - 1;
  }
  result.cost = permutation_cost(cost, result.row_to_col);
  return result;
}

Matrix finite_diff_grad(const MatrixFunction& loss, const Matrix& x, double h) {
  if (!(h > 0.0)) throw Error(ErrorKind::InvalidConfig, "finite-difference step must be > 0");
  Matrix grad(x.rows(), x.cols());
  Matrix probe = x;
  for (std::size_t i = 0; i < x.data().size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double plus = loss(probe);
    probe.data()[i] = orig - h;
    const double minus = loss(probe);
    probe.data()[i] = orig;
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw Error(ErrorKind::NumericalFailure,
                  "non-finite loss while differencing entry " + std::to_string(i));
    }
    grad.data()[i] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

GradientReport check_gradient(const Matrix& analytic, const Matrix& numeric,
                              double rel_tol, double abs_tol) {
  if (!analytic.same_shape(numeric)) {
    throw Error(ErrorKind::InvalidInput, "gradient shapes differ: " +
                                             shape_string(analytic) + " vs " +
                                             shape_string(numeric));
  }
  GradientReport report;
  for (std::size_t i = 0; i < analytic.data().size(); ++i) {
    const double a = analytic.data()[i];
    const double n = numeric.data()[i];
    const double diff = std::abs(a - n);
    const double scale = std::max(std::abs(a), std::abs(n));
    report.max_abs_error = std::max(report.max_abs_error, diff);
    if (scale > 0.0) report.max_rel_error = std::max(report.max_rel_error, diff / scale);
    if (!(diff <= abs_tol + rel_tol * scale)) report.passed = false;
  }
  return report;
}

}  // namespace mlot
