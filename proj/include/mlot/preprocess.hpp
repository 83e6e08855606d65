// SPDX-License-Identifier: Apache-2.0
//
// Sequence-level ranking of vocabulary dimensions, student matching and top-k
// truncation. Teacher columns are ordered by their probability mass summed
// over the whole sequence, student columns are matched to that order by a
// permutation, and both are cut to a shared width k.

#pragma once

#include <cstddef>

#include "mlot/core.hpp"

namespace mlot {

enum class MatchMode {
  SumSort,          // student columns by descending sequence sum
  ExactAssignment,  // minimum L1 matching against the ranked teacher columns
};

inline constexpr std::size_t kMaxExactMatch = 64;

// How a teacher/student pair was aligned.
struct RankSelection {
  Permutation teacher_perm;
  Permutation student_perm;
  std::size_t k_requested = 0;
  std::size_t k = 0;  // effective width, min(k_requested, m, n)
  MatchMode match_mode = MatchMode::SumSort;

  bool clamped() const noexcept { return k != k_requested; }
};

// Truncated, column-aligned teacher and student probabilities of shape T x k.
// Student rows need not sum to one.
class AlignedPair {
 public:
  AlignedPair(Matrix teacher, Matrix student);

  const Matrix& teacher() const noexcept { return teacher_; }
  const Matrix& student() const noexcept { return student_; }
  std::size_t tokens() const noexcept { return teacher_.rows(); }
  std::size_t width() const noexcept { return teacher_.cols(); }

 private:
  Matrix teacher_;
  Matrix student_;
};

// Stable descending argsort of the column sums; ties keep ascending index.
Permutation sort_columns_by_sum(const Matrix& m);

struct RankedTeacher {
  Permutation perm;
  ProbMatrix ranked;
};

RankedTeacher sequence_rank_teacher(const ProbMatrix& teacher);

// Permutation of the student's columns matched to the ranked teacher. In
// ExactAssignment mode the first min(m, n) teacher columns are assigned to
// distinct student columns at minimum total L1 cost; leftover student columns
// follow in SumSort order.
Permutation match_student(const Matrix& teacher_ranked, const Matrix& student,
                          MatchMode mode);

// sum_t sum_{i < min(m, n)} |teacher_ranked(t, i) - student(t, perm[i])|.
double matching_cost(const Matrix& teacher_ranked, const Matrix& student,
                     std::span<const std::size_t> student_perm);

// Keeps the first min(k, m, n) columns of each. k must be >= 1.
AlignedPair truncate_topk(const Matrix& teacher_ranked, const Matrix& student_ranked,
                          std::size_t k);

struct Alignment {
  AlignedPair pair;
  RankSelection selection;
};

// Rank, match and truncate in one pass. Rows must already agree.
Alignment align(const ProbMatrix& teacher, const ProbMatrix& student, std::size_t k,
                MatchMode mode = MatchMode::SumSort);

// Re-applies a recorded selection to fresh matrices of the same widths.
AlignedPair apply_selection(const Matrix& teacher, const Matrix& student,
                            const RankSelection& selection);

}  // namespace mlot
