// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "mlot/composite.hpp"
#include "mlot/oracle.hpp"
#include "mlot/token_ot.hpp"
#include "test_support.hpp"

namespace {

using namespace mlot;
using mlot::testing::Rng;

// Distance from the nearest |.| kink of HAD and SD at the frozen selections.
double kink_margin(const LogitMatrix& teacher, const LogitMatrix& student,
                   const FrozenState& state, const LossWeights& w) {
  double margin = std::numeric_limits<double>::infinity();
  auto probs = [&](double tau) {
    const Temperature t(tau);
    return std::pair{softmax_rows(LogitMatrix(head_rows(teacher.values(), state.tokens)), t),
                     softmax_rows(LogitMatrix(head_rows(student.values(), state.tokens)), t)};
  };
  const auto [t1, s1] = probs(w.tau_sl);
  const AlignedPair p1 = apply_selection(t1.values(), s1.values(), state.rank_sl);
  for (std::size_t i = 0; i < p1.teacher().data().size(); ++i) {
    margin = std::min(margin, std::abs(p1.teacher().data()[i] - p1.student().data()[i]));
  }
  const auto [t2, s2] = probs(w.tau_sd);
  const AlignedPair p2 = apply_selection(t2.values(), s2.values(), state.rank_sd);
  for (std::size_t i = 0; i < p2.tokens(); ++i)
    for (std::size_t j = 0; j < p2.tokens(); ++j)
      for (std::size_t l = 0; l < p2.width(); ++l)
        margin = std::min(margin, std::abs(p2.teacher()(i, l) - p2.student()(j, l)));
  return margin;
}

TEST(CrossEntropy, SingleTokenHalf) {
  const ProbMatrix s(Matrix::from_rows({{0.5, 0.5}}));
  const std::vector<std::size_t> y{0};
  EXPECT_NEAR(ce_loss(s, y).value, 0.693147, 1e-6);
}

TEST(CrossEntropy, CertainLabelIsZero) {
  const ProbMatrix s(Matrix::from_rows({{1.0, 0.0}}));
  const std::vector<std::size_t> y{0};
  EXPECT_EQ(ce_loss(s, y).value, 0.0);
}

TEST(CrossEntropy, TwoTokensAdd) {
  const ProbMatrix s(Matrix::from_rows({{0.5, 0.5, 0.0}, {0.25, 0.25, 0.5}}));
  const std::vector<std::size_t> y{1, 0};
  EXPECT_NEAR(ce_loss(s, y).value, 2.079442, 1e-6);
}

TEST(CrossEntropy, GradientIsProbsMinusOneHot) {
  const ProbMatrix s(Matrix::from_rows({{0.2, 0.3, 0.5}}));
  const std::vector<std::size_t> y{2};
  const Matrix g = ce_loss(s, y).logit_grad;
  EXPECT_DOUBLE_EQ(g(0, 0), 0.2);
  EXPECT_DOUBLE_EQ(g(0, 1), 0.3);
  EXPECT_DOUBLE_EQ(g(0, 2), -0.5);
}

TEST(CrossEntropy, LabelOutOfRangeIsInvalidInput) {
  const ProbMatrix s(Matrix::from_rows({{0.5, 0.5}}));
  const std::vector<std::size_t> y{2};
  try {
    ce_loss(s, y);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidInput);
  }
}

TEST(TotalLoss, CombinationArithmetic) {
  const LossWeights w;
  EXPECT_NEAR(combine_total(1.0, 0.2, 0.5, 0.1, w), 1.039, 1e-12);
}

TEST(TotalLoss, DefaultsMatchPublishedSettings) {
  const LossWeights w;
  EXPECT_EQ(w.alpha, 0.15);
  EXPECT_EQ(w.beta, 0.1);
  EXPECT_EQ(w.gamma, 0.1);
  EXPECT_EQ(w.tau_sl, 1.0);
  EXPECT_EQ(w.tau_sd, 2.0);
  EXPECT_EQ(w.k, 50u);
  EXPECT_EQ(w.sinkhorn.lambda, 0.1);
  EXPECT_EQ(w.sinkhorn.iterations, 20u);
}

TEST(TotalLoss, IdenticalModelsHaveZeroHadAndSd) {
  // Well-separated token rows, so the entropic plan is the identity to ~1e-8.
  Matrix logits(4, 6);
  for (std::size_t t = 0; t < 4; ++t) {
    logits(t, t) = 12.0;
    logits(t, 5) = 0.5 * static_cast<double>(t);
  }
  const LogitMatrix z(logits);
  const LossWeights w;
  const ProbMatrix p = softmax_rows(z, Temperature(1.0));
  const Labels labels = pseudo_labels(p.values(), align(p, p, w.k).selection);
  const LossBreakdown b = total_loss(z, z, labels, w);
  EXPECT_EQ(b.had, 0.0);
  EXPECT_NEAR(b.sd, 0.0, 1e-6);
  double entropy = 0.0;
  for (double v : p.values().data()) entropy -= v * std::log(v);
  EXPECT_GT(b.sl, 0.0);
  EXPECT_NEAR(b.sl, entropy, 1e-12);
}

TEST(TotalLoss, AlphaZeroGivesCrossEntropy) {
  Rng rng(12);
  const LogitMatrix t(mlot::testing::random_logits(rng, 3, 7));
  const LogitMatrix s(mlot::testing::random_logits(rng, 3, 5));
  LossWeights w;
  w.alpha = 0.0;
  const std::vector<std::size_t> y{0, 4, 2};
  const LossBreakdown b = total_loss(t, s, y, w);
  EXPECT_EQ(b.total, b.ce);

  const Matrix g = total_grad(t, s, y, w);
  const Matrix expected = ce_loss(softmax_rows(s, Temperature(1.0)), y).logit_grad;
  EXPECT_EQ(g, expected);
}

TEST(TotalLoss, TotalMatchesItsOwnFields) {
  Rng rng(13);
  LossWeights w;
  w.k = 4;
  for (int trial = 0; trial < 20; ++trial) {
    const LogitMatrix t(mlot::testing::random_logits(rng, 5, 9));
    const LogitMatrix s(mlot::testing::random_logits(rng, 4, 6));
    const LossBreakdown b = total_loss(t, s, std::nullopt, w);
    EXPECT_EQ(b.total, b.ce + w.alpha * (b.had + w.beta * b.sl + w.gamma * b.sd));
    EXPECT_GE(b.ce, 0.0);
    EXPECT_GE(b.had, 0.0);
    EXPECT_GE(b.sl, 0.0);
    EXPECT_GE(b.sd, 0.0);
    EXPECT_EQ(b.tokens, 4u);
    EXPECT_EQ(b.rank_sl.k, 4u);
  }
}

TEST(TotalLoss, TotalIsNondecreasingInGamma) {
  Rng rng(14);
  const LogitMatrix t(mlot::testing::random_logits(rng, 4, 8));
  const LogitMatrix s(mlot::testing::random_logits(rng, 4, 6));
  LossWeights w;
  double previous = -1.0;
  for (double gamma : {0.0, 0.1, 0.5, 2.0}) {
    w.gamma = gamma;
    const LossBreakdown b = total_loss(t, s, std::nullopt, w);
    ASSERT_GT(b.sd, 0.0);
    EXPECT_GE(b.total, previous);
    previous = b.total;
  }
}

TEST(TotalLoss, UnequalLengthsAlignToShorter) {
  Rng rng(15);
  const LogitMatrix t(mlot::testing::random_logits(rng, 6, 8));
  const LogitMatrix s(mlot::testing::random_logits(rng, 4, 5));
  const LossBreakdown b = total_loss(t, s, std::nullopt, LossWeights{});
  EXPECT_EQ(b.tokens, 4u);
  EXPECT_EQ(b.labels.size(), 4u);
  const Matrix g = total_grad(t, s, std::nullopt, LossWeights{});
  EXPECT_EQ(g.rows(), 4u);
  EXPECT_EQ(g.cols(), 5u);
}

TEST(TotalLoss, LabelCountMustMatchStudent) {
  Rng rng(16);
  const LogitMatrix t(mlot::testing::random_logits(rng, 3, 4));
  const LogitMatrix s(mlot::testing::random_logits(rng, 3, 4));
  const std::vector<std::size_t> y{0, 1};
  EXPECT_THROW(total_loss(t, s, y, LossWeights{}), Error);
}

TEST(TotalLoss, PseudoLabelsFollowOwnArgmaxForIdenticalModels) {
  Rng rng(17);
  const LogitMatrix z(mlot::testing::random_logits(rng, 5, 7));
  const LossBreakdown b = total_loss(z, z, std::nullopt, LossWeights{});
  ASSERT_TRUE(b.pseudo_labels);
  const ProbMatrix p = softmax_rows(z, Temperature(1.0));
  double ce = 0.0;
  for (std::size_t t = 0; t < p.rows(); ++t) {
    auto row = p.values().row(t);
    const auto top = static_cast<std::size_t>(
        std::max_element(row.begin(), row.end()) - row.begin());
    EXPECT_EQ(b.labels[t], top);
    ce -= std::log(row[top]);
  }
  EXPECT_NEAR(b.ce, ce, 1e-12);
}

TEST(TotalGrad, IdenticalModelsLeaveOnlySlStructure) {
  // The SD sign terms vanish on the plan diagonal only, so the rows are kept
  // far apart to push off-diagonal plan mass below 1e-8.
  Matrix logits(3, 5);
  for (std::size_t t = 0; t < 3; ++t) logits(t, t + 1) = 12.0;
  logits(0, 0) = 1.0;
  const LogitMatrix z(logits);
  LossWeights w;
  const FrozenState state = freeze_state(z, z, std::nullopt, w);
  ASSERT_EQ(state.rank_sl.teacher_perm, state.rank_sl.student_perm);
  ASSERT_EQ(state.rank_sd.teacher_perm, state.rank_sd.student_perm);

  LossWeights ce_only = w;
  ce_only.alpha = 0.0;
  const Matrix full = grad_frozen(z, z, state, w);
  const Matrix ce = grad_frozen(z, z, state, ce_only);

  // k covers the whole vocabulary and HAD signs are all zero, so the
  // distillation part is alpha * beta * softmax_backward(-t / s)
  // = alpha * beta * (s - t) = 0, plus SD terms weighted by off-diagonal plan mass.
  for (std::size_t i = 0; i < full.data().size(); ++i) {
    EXPECT_NEAR(full.data()[i], ce.data()[i], 1e-9);
  }
}

TEST(TotalGrad, MatchesFiniteDifferencesWithFrozenSelections) {
  Rng rng(19);
  LossWeights w;
  w.k = 4;
  int checked = 0;
  for (int attempt = 0; attempt < 200 && checked < 10; ++attempt) {
    const LogitMatrix t(mlot::testing::random_logits(rng, 3, 8));
    const LogitMatrix s(mlot::testing::random_logits(rng, 3, 6));
    const FrozenState state = freeze_state(t, s, std::nullopt, w);
    if (kink_margin(t, s, state, w) < 1e-4) continue;

    const Matrix analytic = grad_frozen(t, s, state, w);
    const Matrix numeric = finite_diff_grad(
        [&](const Matrix& x) { return evaluate_frozen(t, LogitMatrix(x), state, w).total; },
        s.values());
    const GradientReport r = check_gradient(analytic, numeric, 1e-4, 1e-7);
    EXPECT_TRUE(r.passed) << "max rel " << r.max_rel_error << " max abs " << r.max_abs_error;
    ++checked;
  }
  EXPECT_EQ(checked, 10);
}

TEST(TotalLoss, BatchIsIndependentOfThreadCount) {
  Rng rng(20);
  std::vector<SequencePair> pairs;
  for (int i = 0; i < 12; ++i) {
    pairs.push_back({LogitMatrix(mlot::testing::random_logits(rng, 5, 9)),
                     LogitMatrix(mlot::testing::random_logits(rng, 5, 7)), std::nullopt});
  }
  const auto one = total_loss_batch(pairs, LossWeights{}, 1);
  const auto four = total_loss_batch(pairs, LossWeights{}, 4);
  ASSERT_EQ(one.size(), four.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    EXPECT_EQ(one[i].total, four[i].total);
    EXPECT_EQ(one[i].sd, four[i].sd);
  }
}

TEST(TotalLoss, InvalidWeightsRejected) {
  Rng rng(21);
  const LogitMatrix z(mlot::testing::random_logits(rng, 2, 3));
  LossWeights w;
  w.alpha = -1.0;
  EXPECT_THROW(total_loss(z, z, std::nullopt, w), Error);
  w = LossWeights{};
  w.tau_sd = 0.0;
  EXPECT_THROW(total_loss(z, z, std::nullopt, w), Error);
}

}  // namespace
