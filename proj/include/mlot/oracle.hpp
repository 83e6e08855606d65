// SPDX-License-Identifier: Apache-2.0
//
// Ground-truth solvers for checking the losses: exact optimal transport over
// doubly-stochastic plans, a linear assignment solver, and finite-difference
// gradients.

#pragma once

#include <cstddef>
#include <functional>

#include "mlot/core.hpp"

namespace mlot {

enum class ExactMethod { BruteForce, Assignment };

inline constexpr std::size_t kMaxBruteForce = 7;
inline constexpr std::size_t kMaxAssignment = 64;

// A linear objective over unit-marginal plans attains its minimum at a
// permutation matrix, so the optimum is reported as a permutation.
struct ExactOTResult {
  double value = 0.0;
  Permutation plan;  // row i is matched to column plan[i]
  ExactMethod method = ExactMethod::BruteForce;

  Matrix plan_matrix() const;
};

// Sum of cost(i, plan[i]) accumulated in row order.
double permutation_cost(const Matrix& cost, std::span<const std::size_t> plan);

// Minimises sum_ij P_ij C_ij over P with unit row and column sums. C must be
// square; BruteForce accepts n <= 7 and Assignment n <= 64.
ExactOTResult exact_ot(const Matrix& cost, ExactMethod method);

struct AssignmentResult {
  Permutation row_to_col;  // size rows(), distinct columns
  double cost = 0.0;
};

// Rectangular assignment (rows <= cols) by shortest augmenting paths with
// dual potentials, O(rows^2 * cols). Every row gets a distinct column.
AssignmentResult solve_assignment(const Matrix& cost);

using MatrixFunction = std::function<double(const Matrix&)>;

// Central differences (f(x + h e) - f(x - h e)) / 2h, one entry at a time.
Matrix finite_diff_grad(const MatrixFunction& loss, const Matrix& x, double h = 1e-6);

struct GradientReport {
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  bool passed = true;
};

// Passes iff |a - n| <= abs_tol + rel_tol * max(|a|, |n|) for every entry.
// max_rel_error is |a - n| / max(|a|, |n|) over entries where that is nonzero.
GradientReport check_gradient(const Matrix& analytic, const Matrix& numeric,
                              double rel_tol, double abs_tol);

}  // namespace mlot
