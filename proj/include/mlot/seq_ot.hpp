// SPDX-License-Identifier: Apache-2.0
//
// Sequence-level transport between token positions: a token-to-token L1 cost,
// entropic plans by alternating row/column normalisation of exp(-C / lambda),
// and the resulting transport loss with its gradient (plan held fixed).

#pragma once

#include <cstddef>

#include "mlot/core.hpp"
#include "mlot/preprocess.hpp"

namespace mlot {

// Square, finite, nonnegative.
class CostMatrix {
 public:
  explicit CostMatrix(Matrix values);

  const Matrix& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.rows(); }

 private:
  Matrix values_;
};

// Square, finite, nonnegative. Target marginals are all ones.
class TransportPlan {
 public:
  explicit TransportPlan(Matrix values);

  const Matrix& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.rows(); }

  std::vector<double> row_sums() const;
  std::vector<double> col_sums() const;
  // Largest |sum - 1| over all rows and columns.
  double max_marginal_error() const;

 private:
  Matrix values_;
};

struct SinkhornConfig {
  double lambda = 0.1;
  std::size_t iterations = 20;
  // Divide the cost by its maximum before building the kernel. Use when
  // exp(-C / lambda) underflows for the cost scale at hand.
  bool rescale_cost = false;

  void validate() const;
};

// C(i, j) = sum_l |teacher(i, l) - student(j, l)|.
CostMatrix seq_cost_matrix(const AlignedPair& pair);

// K = exp(-C / lambda), then `iterations` rounds of: divide each row by its
// sum, divide each column by its sum. Throws NumericalUnderflow if a row or
// column of the kernel vanishes.
TransportPlan sinkhorn_plan(const CostMatrix& cost, const SinkhornConfig& config);

// <P, C> = sum_ij P(i, j) C(i, j).
double sd_loss(const CostMatrix& cost, const TransportPlan& plan);

// d<P, C>/d student(j, l) = sum_i P(i, j) sign(student(j, l) - teacher(i, l)),
// with P treated as a constant.
Matrix sd_grad(const AlignedPair& pair, const TransportPlan& plan);

}  // namespace mlot
