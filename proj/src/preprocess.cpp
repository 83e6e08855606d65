// SPDX-License-Identifier: Apache-2.0

#include "mlot/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mlot/oracle.hpp"

namespace mlot {

namespace {

bool in_unit_interval(const Matrix& m) {
  return std::all_of(m.data().begin(), m.data().end(),
                     [](double v) { return v >= 0.0 && v <= 1.0; });
}

}  // namespace

AlignedPair::AlignedPair(Matrix teacher, Matrix student)
    : teacher_(std::move(teacher)), student_(std::move(student)) {
  if (!teacher_.same_shape(student_)) {
    throw Error(ErrorKind::InvalidInput, "aligned pair shape mismatch: teacher " +
                                             shape_string(teacher_) + ", student " +
                                             shape_string(student_));
  }
  if (!in_unit_interval(teacher_) || !in_unit_interval(student_)) {
    throw Error(ErrorKind::InvalidInput, "aligned pair entries must lie in [0, 1]");
  }
}

Permutation sort_columns_by_sum(const Matrix& m) {
  const std::vector<double> sums = column_sums(m);
  Permutation perm(m.cols());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::stable_sort(perm.begin(), perm.end(),
                   [&](std::size_t a, std::size_t b) { return sums[a] > sums[b]; });
  return perm;
}

RankedTeacher sequence_rank_teacher(const ProbMatrix& teacher) {
  Permutation perm = sort_columns_by_sum(teacher.values());
  ProbMatrix ranked(select_columns(teacher.values(), perm));
  return {std::move(perm), std::move(ranked)};
}

double matching_cost(const Matrix& teacher_ranked, const Matrix& student,
                     std::span<const std::size_t> student_perm) {
  const std::size_t width = std::min(teacher_ranked.cols(), student.cols());
  double total = 0.0;
  for (std::size_t t = 0; t < teacher_ranked.rows(); ++t) {
    for (std::size_t i = 0; i < width; ++i) {
      total += std::abs(teacher_ranked(t, i) - student(t, student_perm[i]));
    }
  }
  return total;
}

Permutation match_student(const Matrix& teacher_ranked, const Matrix& student,
                          MatchMode mode) {
  if (teacher_ranked.rows() != student.rows()) {
    throw Error(ErrorKind::InvalidInput, "teacher and student token counts differ");
  }
  Permutation by_sum = sort_columns_by_sum(student);
  if (mode == MatchMode::SumSort) return by_sum;

  const std::size_t width = std::min(teacher_ranked.cols(), student.cols());
  if (width > kMaxExactMatch) {
    throw Error(ErrorKind::TooLargeForExact,
                "exact student matching is limited to min(m, n) <= " +
                    std::to_string(kMaxExactMatch) + ", got " + std::to_string(width));
  }
  Matrix cost(width, student.cols());
  for (std::size_t i = 0; i < width; ++i) {
    for (std::size_t j = 0; j < student.cols(); ++j) {
      double c = 0.0;
      for (std::size_t t = 0; t < student.rows(); ++t) {
        c += std::abs(teacher_ranked(t, i) - student(t, j));
      }
      cost(i, j) = c;
    }
  }
  AssignmentResult assigned = solve_assignment(cost);

  Permutation perm = assigned.row_to_col;
  std::vector<bool> taken(student.cols(), false);
  for (std::size_t j : perm) taken[j] = true;
  for (std::size_t j : by_sum) {
    if (!taken[j]) perm.push_back(j);
  }
  return perm;
}

AlignedPair truncate_topk(const Matrix& teacher_ranked, const Matrix& student_ranked,
                          std::size_t k) {
  if (k == 0) throw Error(ErrorKind::InvalidConfig, "truncation width k must be >= 1");
  const std::size_t width = std::min({k, teacher_ranked.cols(), student_ranked.cols()});
  Permutation head(width);
  std::iota(head.begin(), head.end(), std::size_t{0});
  return {select_columns(teacher_ranked, head), select_columns(student_ranked, head)};
}

Alignment align(const ProbMatrix& teacher, const ProbMatrix& student, std::size_t k,
                MatchMode mode) {
  if (teacher.rows() != student.rows()) {
    throw Error(ErrorKind::InvalidInput, "teacher and student token counts differ");
  }
  if (k == 0) throw Error(ErrorKind::InvalidConfig, "truncation width k must be >= 1");
  RankedTeacher ranked = sequence_rank_teacher(teacher);
  RankSelection selection;
  selection.student_perm = match_student(ranked.ranked.values(), student.values(), mode);
  selection.teacher_perm = std::move(ranked.perm);
  selection.k_requested = k;
  selection.k = std::min({k, teacher.cols(), student.cols()});
  selection.match_mode = mode;
  AlignedPair pair = apply_selection(teacher.values(), student.values(), selection);
  return {std::move(pair), std::move(selection)};
}

AlignedPair apply_selection(const Matrix& teacher, const Matrix& student,
                            const RankSelection& selection) {
  if (!is_permutation_of_range(selection.teacher_perm, teacher.cols()) ||
      !is_permutation_of_range(selection.student_perm, student.cols())) {
    throw Error(ErrorKind::InvalidInput, "selection does not match matrix widths");
  }
  if (selection.k == 0 || selection.k > std::min(teacher.cols(), student.cols())) {
    throw Error(ErrorKind::InvalidInput, "selection width out of range");
  }
  const std::span<const std::size_t> t_cols(selection.teacher_perm.data(), selection.k);
  const std::span<const std::size_t> s_cols(selection.student_perm.data(), selection.k);
  return {select_columns(teacher, t_cols), select_columns(student, s_cols)};
}

}  // namespace mlot
