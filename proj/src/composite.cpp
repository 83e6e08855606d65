// SPDX-License-Identifier: Apache-2.0

#include "mlot/composite.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

#include "mlot/token_ot.hpp"

namespace mlot {

namespace {

bool finite_nonnegative(double v) { return std::isfinite(v) && v >= 0.0; }

std::size_t aligned_length(const LogitMatrix& teacher, const LogitMatrix& student) {
  const std::size_t length = std::min(teacher.rows(), student.rows());
  if (length == 0) throw Error(ErrorKind::InvalidInput, "teacher and student share no tokens");
  return length;
}

struct Probabilities {
  ProbMatrix teacher;
  ProbMatrix student;
};

Probabilities aligned_softmax(const LogitMatrix& teacher, const LogitMatrix& student,
                              std::size_t length, double tau) {
  const Temperature temperature(tau);
  return {softmax_rows(LogitMatrix(head_rows(teacher.values(), length)), temperature),
          softmax_rows(LogitMatrix(head_rows(student.values(), length)), temperature)};
}

// Adds scale * aligned(t, c) into full(t, student_perm[c]).
void scatter_add(Matrix& full, const Matrix& aligned, const RankSelection& rank,
                 double scale) {
  for (std::size_t t = 0; t < aligned.rows(); ++t) {
    for (std::size_t c = 0; c < aligned.cols(); ++c) {
      full(t, rank.student_perm[c]) += scale * aligned(t, c);
    }
  }
}

}  // namespace

void LossWeights::validate() const {
  for (double v : {alpha, beta, gamma}) {
    if (!finite_nonnegative(v)) {
      throw Error(ErrorKind::InvalidConfig, "loss weights must be finite and nonnegative");
    }
  }
  Temperature{tau_sl};
  Temperature{tau_sd};
  if (k < 1) throw Error(ErrorKind::InvalidConfig, "truncation width k must be >= 1");
  sinkhorn.validate();
}

double combine_total(double ce, double had, double sl, double sd, const LossWeights& w) {
  return ce + w.alpha * (had + w.beta * sl + w.gamma * sd);
}

CrossEntropy ce_loss(const ProbMatrix& student, std::span<const std::size_t> labels,
                     Temperature temperature) {
  if (labels.size() != student.rows()) {
    throw Error(ErrorKind::InvalidInput,
                "expected " + std::to_string(student.rows()) + " labels, got " +
                    std::to_string(labels.size()));
  }
  const Matrix& s = student.values();
  CrossEntropy out{0.0, Matrix(s.rows(), s.cols())};
  const double inv_tau = 1.0 / temperature.value();
  for (std::size_t t = 0; t < s.rows(); ++t) {
    const std::size_t y = labels[t];
    if (y >= s.cols()) {
      throw Error(ErrorKind::InvalidInput,
                  "label " + std::to_string(y) + " at token " + std::to_string(t) +
                      " is outside the student vocabulary of " + std::to_string(s.cols()));
    }
    out.value -= safe_log(s(t, y));
    for (std::size_t c = 0; c < s.cols(); ++c) {
      out.logit_grad(t, c) = inv_tau * (s(t, c) - (c == y ? 1.0 : 0.0));
    }
  }
  return out;
}

std::vector<std::size_t> pseudo_labels(const Matrix& teacher, const RankSelection& rank) {
  const std::size_t m = rank.teacher_perm.size();
  const std::size_t n = rank.student_perm.size();
  if (teacher.cols() != m || n == 0) {
    throw Error(ErrorKind::InvalidInput, "selection does not match teacher width");
  }
  std::vector<std::size_t> rank_of(m);
  for (std::size_t r = 0; r < m; ++r) rank_of[rank.teacher_perm[r]] = r;

  std::vector<std::size_t> labels(teacher.rows());
  for (std::size_t t = 0; t < teacher.rows(); ++t) {
    auto row = teacher.row(t);
    const auto top = static_cast<std::size_t>(
        std::distance(row.begin(), std::max_element(row.begin(), row.end())));
    labels[t] = rank.student_perm[std::min(rank_of[top], n - 1)];
  }
  return labels;
}

FrozenState freeze_state(const LogitMatrix& teacher, const LogitMatrix& student,
                         const Labels& labels, const LossWeights& w) {
  w.validate();
  const std::size_t length = aligned_length(teacher, student);
  if (labels && labels->size() != student.rows()) {
    throw Error(ErrorKind::InvalidInput,
                "expected " + std::to_string(student.rows()) + " labels, got " +
                    std::to_string(labels->size()));
  }

  const Probabilities p_sl = aligned_softmax(teacher, student, length, w.tau_sl);
  Alignment a_sl = align(p_sl.teacher, p_sl.student, w.k, w.match_mode);
  const Probabilities p_sd = aligned_softmax(teacher, student, length, w.tau_sd);
  Alignment a_sd = align(p_sd.teacher, p_sd.student, w.k, w.match_mode);
  TransportPlan plan = sinkhorn_plan(seq_cost_matrix(a_sd.pair), w.sinkhorn);

  std::vector<std::size_t> targets;
  if (labels) {
    targets.assign(labels->begin(), labels->begin() + static_cast<std::ptrdiff_t>(length));
  } else {
    targets = pseudo_labels(p_sl.teacher.values(), a_sl.selection);
  }
  return {length,          std::move(a_sl.selection), std::move(a_sd.selection),
          std::move(plan), std::move(targets),        !labels.has_value()};
}

LossBreakdown evaluate_frozen(const LogitMatrix& teacher, const LogitMatrix& student,
                              const FrozenState& state, const LossWeights& w) {
  const Probabilities p_sl = aligned_softmax(teacher, student, state.tokens, w.tau_sl);
  const Probabilities p_sd = aligned_softmax(teacher, student, state.tokens, w.tau_sd);

  LossBreakdown out;
  out.ce = ce_loss(p_sl.student, state.labels, Temperature(w.tau_sl)).value;
  const AlignedPair pair_sl =
      apply_selection(p_sl.teacher.values(), p_sl.student.values(), state.rank_sl);
  out.had = had_loss(pair_sl).value;
  out.sl = sl_loss(pair_sl).value;
  const AlignedPair pair_sd =
      apply_selection(p_sd.teacher.values(), p_sd.student.values(), state.rank_sd);
  out.sd = sd_loss(seq_cost_matrix(pair_sd), state.plan);
  out.total = combine_total(out.ce, out.had, out.sl, out.sd, w);

  out.tokens = state.tokens;
  out.rank_sl = state.rank_sl;
  out.rank_sd = state.rank_sd;
  out.labels = state.labels;
  out.pseudo_labels = state.pseudo_labels;
  return out;
}

Matrix grad_frozen(const LogitMatrix& teacher, const LogitMatrix& student,
                   const FrozenState& state, const LossWeights& w) {
  const Probabilities p_sl = aligned_softmax(teacher, student, state.tokens, w.tau_sl);
  const Probabilities p_sd = aligned_softmax(teacher, student, state.tokens, w.tau_sd);
  const std::size_t n = student.cols();

  Matrix logit_grad = ce_loss(p_sl.student, state.labels, Temperature(w.tau_sl)).logit_grad;

  const AlignedPair pair_sl =
      apply_selection(p_sl.teacher.values(), p_sl.student.values(), state.rank_sl);
  Matrix grad_sl(state.tokens, n);
  scatter_add(grad_sl, had_loss(pair_sl).grad, state.rank_sl, w.alpha);
  scatter_add(grad_sl, sl_loss(pair_sl).grad, state.rank_sl, w.alpha * w.beta);
  const Matrix back_sl =
      softmax_backward(p_sl.student.values(), grad_sl, Temperature(w.tau_sl));

  const AlignedPair pair_sd =
      apply_selection(p_sd.teacher.values(), p_sd.student.values(), state.rank_sd);
  Matrix grad_sd(state.tokens, n);
  scatter_add(grad_sd, sd_grad(pair_sd, state.plan), state.rank_sd, w.alpha * w.gamma);
  const Matrix back_sd =
      softmax_backward(p_sd.student.values(), grad_sd, Temperature(w.tau_sd));

  Matrix out(student.rows(), n);
  for (std::size_t t = 0; t < state.tokens; ++t) {
    for (std::size_t c = 0; c < n; ++c) {
      out(t, c) = logit_grad(t, c) + back_sl(t, c) + back_sd(t, c);
    }
  }
  return out;
}

LossBreakdown total_loss(const LogitMatrix& teacher, const LogitMatrix& student,
                         const Labels& labels, const LossWeights& w) {
  return evaluate_frozen(teacher, student, freeze_state(teacher, student, labels, w), w);
}

Matrix total_grad(const LogitMatrix& teacher, const LogitMatrix& student,
                  const Labels& labels, const LossWeights& w) {
  return grad_frozen(teacher, student, freeze_state(teacher, student, labels, w), w);
}

LossAndGrad total_loss_and_grad(const LogitMatrix& teacher, const LogitMatrix& student,
                                const Labels& labels, const LossWeights& w) {
  const FrozenState state = freeze_state(teacher, student, labels, w);
  return {evaluate_frozen(teacher, student, state, w),
          grad_frozen(teacher, student, state, w)};
}

std::vector<LossBreakdown> total_loss_batch(std::span<const SequencePair> pairs,
                                            const LossWeights& w, unsigned threads) {
  std::vector<LossBreakdown> results(pairs.size());
  std::vector<std::exception_ptr> errors(pairs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < pairs.size(); i = next++) {
      try {
        results[i] = total_loss(pairs[i].teacher, pairs[i].student, pairs[i].labels, w);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned count =
      std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(pairs.size())));
  {
    std::vector<std::jthread> pool;
    for (unsigned i = 1; i < count; ++i) pool.emplace_back(worker);
    worker();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

}  // namespace mlot
