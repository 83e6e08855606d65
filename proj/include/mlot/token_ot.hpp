// SPDX-License-Identifier: Apache-2.0
//
// Token-level transport losses on aligned, truncated probabilities, plus the
// zero-padded per-token sorted baseline. Gradients are taken with respect to
// the student probabilities, with the ranking and truncation held constant.

#pragma once

#include "mlot/core.hpp"
#include "mlot/preprocess.hpp"

namespace mlot {

struct TokenLossGrad {
  double value = 0.0;
  Matrix grad;  // d value / d student, same shape as the student input
};

// sum_t sum_i |t(t, i) - s(t, i)|; subgradient sign(s - t) with sign(0) = 0.
TokenLossGrad had_loss(const AlignedPair& pair);

// -sum_t sum_i t(t, i) * ln(max(s(t, i), floor)).
TokenLossGrad sl_loss(const AlignedPair& pair, double floor = kProbFloor);

// Pads the narrower matrix with zero columns, sorts every token row of both
// sides descending and sums the absolute differences. Row counts must match.
double uld_loss(const Matrix& teacher, const Matrix& student);

// uld_loss with its subgradient with respect to `student` (T x n). Padding
// columns carry no gradient.
TokenLossGrad uld_loss_grad(const Matrix& teacher, const Matrix& student);

}  // namespace mlot
