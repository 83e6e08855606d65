// SPDX-License-Identifier: Apache-2.0
//
// Toy cross-vocabulary distillation. A frozen synthetic teacher emits m-way
// logits per context; a per-context logit table with n != m columns is trained
// by full-batch gradient descent on the distillation objective.
//
// Contexts are shuffled into training sequences of T tokens; a second shuffle
// of the same contexts forms the held-out evaluation sequences, so evaluation
// scores sequence compositions the optimiser never saw.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "mlot/composite.hpp"

namespace mlot {

enum class DistillMode { MultiLevelOT, CeOnly, Uld };

std::string_view mode_name(DistillMode mode);
DistillMode parse_mode(std::string_view name);

struct DistillConfig {
  std::uint64_t seed = 42;
  std::size_t m = 20;         // teacher vocabulary
  std::size_t n = 15;         // student vocabulary
  std::size_t T = 8;          // tokens per sequence
  std::size_t contexts = 32;
  std::size_t steps = 500;
  double lr = 0.5;
  double sharpness = 3.0;     // teacher logit scale
  bool labeled = true;        // false: CE on teacher pseudo-labels
  LossWeights weights{};
  DistillMode mode = DistillMode::MultiLevelOT;

  void validate() const;
};

class SyntheticTeacher {
 public:
  SyntheticTeacher(std::uint64_t seed, std::size_t m, std::size_t contexts, double sharpness);

  const Matrix& table() const noexcept { return table_; }
  std::size_t vocab() const noexcept { return table_.cols(); }

  LogitMatrix logits(std::span<const std::size_t> context_ids) const;

 private:
  Matrix table_;
};

class LinearStudent {
 public:
  LinearStudent(std::size_t n, std::size_t contexts, double learning_rate, std::uint64_t seed);

  const Matrix& weights() const noexcept { return weights_; }

  LogitMatrix logits(std::span<const std::size_t> context_ids) const;

  // Adds grad row t into the accumulator row of context_ids[t].
  void accumulate(std::span<const std::size_t> context_ids, const Matrix& grad,
                  Matrix& accumulator) const;
  void step(const Matrix& accumulated_grad);

 private:
  Matrix weights_;
  double learning_rate_;
};

struct StepMetrics {
  std::size_t step = 0;
  double ce = 0.0;
  double had = 0.0;
  double sl = 0.0;
  double sd = 0.0;
  double total = 0.0;    // objective optimised by the run's mode
  double eval_sd = 0.0;  // SD loss summed over evaluation sequences
};

struct RunMetrics {
  std::vector<StepMetrics> steps;
};

class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t step, RunMetrics partial);

  std::size_t step() const noexcept { return step_; }
  const RunMetrics& partial() const noexcept { return partial_; }

 private:
  std::size_t step_;
  RunMetrics partial_;
};

// Records metrics at the current weights, then takes one gradient step, for
// each of cfg.steps steps. Throws DivergenceError on a non-finite metric.
RunMetrics run_distillation(const DistillConfig& cfg);

struct ModeSummary {
  DistillMode mode;
  double initial_eval_sd;
  double final_eval_sd;
  double final_had;
};

// The three modes with a shared seed, in the order multilevel_ot, ce_only, uld.
std::vector<ModeSummary> compare_modes(const DistillConfig& cfg);

inline constexpr std::string_view kMetricsHeader = "step,ce,had,sl,sd,total,eval_sd";

void write_metrics_csv(std::ostream& os, const RunMetrics& metrics);

}  // namespace mlot
