// SPDX-License-Identifier: Apache-2.0
//
// The full distillation objective
//
//   total = CE + alpha * (HAD + beta * SL + gamma * SD)
//
// CE, HAD and SL read the softmax at tau_sl; SD reads the softmax at tau_sd.
// Each temperature gets its own ranking/truncation. Gradients with respect to
// the student logits treat those selections and the Sinkhorn plan as
// constants; `FrozenState` captures them so the same constants can be reused
// for evaluation and finite-difference checks.

#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "mlot/core.hpp"
#include "mlot/preprocess.hpp"
#include "mlot/seq_ot.hpp"

namespace mlot {

using Labels = std::optional<std::vector<std::size_t>>;

struct LossWeights {
  double alpha = 0.15;
  double beta = 0.1;
  double gamma = 0.1;
  double tau_sl = 1.0;
  double tau_sd = 2.0;
  std::size_t k = 50;
  SinkhornConfig sinkhorn{};
  MatchMode match_mode = MatchMode::SumSort;

  void validate() const;
};

struct LossBreakdown {
  double ce = 0.0;
  double had = 0.0;
  double sl = 0.0;
  double sd = 0.0;
  double total = 0.0;
  std::size_t tokens = 0;  // aligned length min(T_teacher, T_student)
  RankSelection rank_sl;
  RankSelection rank_sd;
  std::vector<std::size_t> labels;  // CE targets actually used
  bool pseudo_labels = false;
};

// ce + alpha * (had + beta * sl + gamma * sd), in that evaluation order.
double combine_total(double ce, double had, double sl, double sd, const LossWeights& w);

struct CrossEntropy {
  double value = 0.0;
  Matrix logit_grad;  // (s - onehot(y)) / tau per token
};

// -sum_t ln(max(s(t, y_t), floor)). labels.size() must equal the row count.
CrossEntropy ce_loss(const ProbMatrix& student, std::span<const std::size_t> labels,
                     Temperature temperature = Temperature(1.0));

// Teacher argmax per token, carried over to the student vocabulary through the
// ranking: the argmax's rank r among teacher columns maps to student column
// student_perm[min(r, n - 1)].
std::vector<std::size_t> pseudo_labels(const Matrix& teacher, const RankSelection& rank);

struct FrozenState {
  std::size_t tokens;
  RankSelection rank_sl;
  RankSelection rank_sd;
  TransportPlan plan;
  std::vector<std::size_t> labels;
  bool pseudo_labels;
};

// Computes selections, Sinkhorn plan and CE targets at the given point. In
// unlabeled mode (labels empty) the targets are pseudo_labels(). Given labels
// must have one entry per student row; only the aligned prefix is used.
FrozenState freeze_state(const LogitMatrix& teacher, const LogitMatrix& student,
                         const Labels& labels, const LossWeights& w);

LossBreakdown evaluate_frozen(const LogitMatrix& teacher, const LogitMatrix& student,
                              const FrozenState& state, const LossWeights& w);

// d total / d student logits, shape T_student x n. Rows past the aligned
// length are zero.
Matrix grad_frozen(const LogitMatrix& teacher, const LogitMatrix& student,
                   const FrozenState& state, const LossWeights& w);

LossBreakdown total_loss(const LogitMatrix& teacher, const LogitMatrix& student,
                         const Labels& labels, const LossWeights& w);

Matrix total_grad(const LogitMatrix& teacher, const LogitMatrix& student,
                  const Labels& labels, const LossWeights& w);

struct LossAndGrad {
  LossBreakdown breakdown;
  Matrix grad;
};

LossAndGrad total_loss_and_grad(const LogitMatrix& teacher, const LogitMatrix& student,
                                const Labels& labels, const LossWeights& w);

struct SequencePair {
  LogitMatrix teacher;
  LogitMatrix student;
  Labels labels;
};

// total_loss over independent pairs on up to `threads` workers. Results are
// ordered by input index and do not depend on the thread count.
std::vector<LossBreakdown> total_loss_batch(std::span<const SequencePair> pairs,
                                            const LossWeights& w, unsigned threads = 1);

}  // namespace mlot
