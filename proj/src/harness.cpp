// SPDX-License-Identifier: Apache-2.0

#include "mlot/harness.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <ostream>
#include <random>

#include "mlot/io.hpp"
#include "mlot/token_ot.hpp"

namespace mlot {

namespace {

// Independent streams derived from the run seed.
constexpr std::uint64_t kTeacherStream = 0x7465616368ULL;
constexpr std::uint64_t kLabelStream = 0x6c6162656cULL;
constexpr std::uint64_t kSplitStream = 0x73706c6974ULL;
constexpr std::uint64_t kStudentStream = 0x7374756465ULL;

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{seed, salt};
  return std::mt19937_64(seq);
}

std::vector<std::vector<std::size_t>> chunk_sequences(std::vector<std::size_t> order,
                                                      std::size_t length) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += length) {
    const std::size_t end = std::min(order.size(), i + length);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<std::size_t> shuffled(std::size_t count, std::mt19937_64& rng) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

bool all_finite(const StepMetrics& s) {
  return std::isfinite(s.ce) && std::isfinite(s.had) && std::isfinite(s.sl) &&
         std::isfinite(s.sd) && std::isfinite(s.total) && std::isfinite(s.eval_sd);
}

// Ground-truth student token per context: the teacher's argmax pushed through
// a fixed random map from the teacher vocabulary to the student vocabulary.
std::vector<std::size_t> context_labels(const SyntheticTeacher& teacher, std::size_t n,
                                        std::uint64_t seed) {
  auto rng = stream(seed, kLabelStream);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> vocab_map(teacher.vocab());
  for (auto& v : vocab_map) v = pick(rng);

  const Matrix& table = teacher.table();
  std::vector<std::size_t> labels(table.rows());
  for (std::size_t c = 0; c < table.rows(); ++c) {
    auto row = table.row(c);
    labels[c] = vocab_map[static_cast<std::size_t>(
        std::distance(row.begin(), std::max_element(row.begin(), row.end())))];
  }
  return labels;
}

}  // namespace

std::string_view mode_name(DistillMode mode) {
  switch (mode) {
    case DistillMode::MultiLevelOT: return "multilevel_ot";
    case DistillMode::CeOnly: return "ce_only";
    case DistillMode::Uld: return "uld";
  }
  return "unknown";
}

DistillMode parse_mode(std::string_view name) {
  for (DistillMode m : {DistillMode::MultiLevelOT, DistillMode::CeOnly, DistillMode::Uld}) {
    if (mode_name(m) == name) return m;
  }
  throw Error(ErrorKind::InvalidConfig, "unknown distillation mode '" + std::string(name) + "'");
}

void DistillConfig::validate() const {
  if (m < 2 || n < 2) throw Error(ErrorKind::InvalidConfig, "vocabularies need >= 2 entries");
  if (T < 1 || contexts < 1) {
    throw Error(ErrorKind::InvalidConfig, "T and contexts must be >= 1");
  }
  if (steps < 1) throw Error(ErrorKind::InvalidConfig, "steps must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw Error(ErrorKind::InvalidConfig, "learning rate must be finite and >= 0");
  }
  if (!(sharpness > 0.0) || !std::isfinite(sharpness)) {
    throw Error(ErrorKind::InvalidConfig, "sharpness must be positive");
  }
  weights.validate();
}

SyntheticTeacher::SyntheticTeacher(std::uint64_t seed, std::size_t m, std::size_t contexts,
                                   double sharpness)
    : table_(contexts, m) {
  auto rng = stream(seed, kTeacherStream);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (double& v : table_.data()) v = sharpness * gauss(rng);
}

LogitMatrix SyntheticTeacher::logits(std::span<const std::size_t> context_ids) const {
  return LogitMatrix(select_rows(table_, context_ids));
}

LinearStudent::LinearStudent(std::size_t n, std::size_t contexts, double learning_rate,
                             std::uint64_t seed)
    : weights_(contexts, n), learning_rate_(learning_rate) {
  auto rng = stream(seed, kStudentStream);
  std::normal_distribution<double> gauss(0.0, 0.01);
  for (double& v : weights_.data()) v = gauss(rng);
}

LogitMatrix LinearStudent::logits(std::span<const std::size_t> context_ids) const {
  return LogitMatrix(select_rows(weights_, context_ids));
}

void LinearStudent::accumulate(std::span<const std::size_t> context_ids, const Matrix& grad,
                               Matrix& accumulator) const {
  for (std::size_t t = 0; t < context_ids.size(); ++t) {
    auto src = grad.row(t);
    auto dst = accumulator.row(context_ids[t]);
    for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
  }
}

void LinearStudent::step(const Matrix& accumulated_grad) {
  for (std::size_t i = 0; i < weights_.data().size(); ++i) {
    weights_.data()[i] -= learning_rate_ * accumulated_grad.data()[i];
  }
}

DivergenceError::DivergenceError(std::size_t step, RunMetrics partial)
    : Error(ErrorKind::NumericalFailure,
            "distillation diverged at step " + std::to_string(step)),
      step_(step),
      partial_(std::move(partial)) {}

RunMetrics run_distillation(const DistillConfig& cfg) {
  cfg.validate();
  const SyntheticTeacher teacher(cfg.seed, cfg.m, cfg.contexts, cfg.sharpness);
  LinearStudent student(cfg.n, cfg.contexts, cfg.lr, cfg.seed);
  const std::vector<std::size_t> truth = context_labels(teacher, cfg.n, cfg.seed);

  auto split_rng = stream(cfg.seed, kSplitStream);
  const auto train = chunk_sequences(shuffled(cfg.contexts, split_rng), cfg.T);
  const auto eval = chunk_sequences(shuffled(cfg.contexts, split_rng), cfg.T);

  auto labels_for = [&](const std::vector<std::size_t>& seq) -> Labels {
    if (!cfg.labeled) return std::nullopt;
    std::vector<std::size_t> out;
    out.reserve(seq.size());
    for (std::size_t c : seq) out.push_back(truth[c]);
    return out;
  };

  const LossWeights& w = cfg.weights;
  RunMetrics metrics;
  metrics.steps.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    if (!all_finite(student.weights())) throw DivergenceError(step, std::move(metrics));
    StepMetrics rec;
    rec.step = step;
    Matrix accumulated(cfg.contexts, cfg.n);

    for (const auto& seq : train) {
      const LogitMatrix t_logits = teacher.logits(seq);
      const LogitMatrix s_logits = student.logits(seq);
      const Labels labels = labels_for(seq);

      LossBreakdown loss;
      Matrix grad;
      double objective = 0.0;
      if (cfg.mode == DistillMode::MultiLevelOT) {
        LossAndGrad lg = total_loss_and_grad(t_logits, s_logits, labels, w);
        loss = std::move(lg.breakdown);
        grad = std::move(lg.grad);
        objective = loss.total;
      } else {
        loss = total_loss(t_logits, s_logits, labels, w);
        const Temperature tau(w.tau_sl);
        const ProbMatrix s_probs = softmax_rows(s_logits, tau);
        grad = ce_loss(s_probs, loss.labels, tau).logit_grad;
        objective = loss.ce;
        if (cfg.mode == DistillMode::Uld) {
          const ProbMatrix t_probs = softmax_rows(t_logits, tau);
          const TokenLossGrad uld = uld_loss_grad(t_probs.values(), s_probs.values());
          Matrix upstream = uld.grad;
          for (double& v : upstream.data()) v *= w.alpha;
          const Matrix back = softmax_backward(s_probs.values(), upstream, tau);
          for (std::size_t i = 0; i < grad.data().size(); ++i) {
            grad.data()[i] += back.data()[i];
          }
          objective = loss.ce + w.alpha * uld.value;
        }
      }
      rec.ce += loss.ce;
      rec.had += loss.had;
      rec.sl += loss.sl;
      rec.sd += loss.sd;
      rec.total += objective;
      student.accumulate(seq, grad, accumulated);
    }

    for (const auto& seq : eval) {
      rec.eval_sd +=
          total_loss(teacher.logits(seq), student.logits(seq), labels_for(seq), w).sd;
    }

    if (!all_finite(rec) || !all_finite(accumulated)) {
      throw DivergenceError(step, std::move(metrics));
    }
    metrics.steps.push_back(rec);
    student.step(accumulated);
  }
  return metrics;
}

std::vector<ModeSummary> compare_modes(const DistillConfig& cfg) {
  constexpr DistillMode kModes[] = {DistillMode::MultiLevelOT, DistillMode::CeOnly,
                                    DistillMode::Uld};
  std::vector<std::future<RunMetrics>> runs;
  for (DistillMode mode : kModes) {
    DistillConfig c = cfg;
    c.mode = mode;
    runs.push_back(std::async(std::launch::async, [c] { return run_distillation(c); }));
  }
  std::vector<ModeSummary> out;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const RunMetrics m = runs[i].get();
    out.push_back({kModes[i], m.steps.front().eval_sd, m.steps.back().eval_sd,
                   m.steps.back().had});
  }
  return out;
}

void write_metrics_csv(std::ostream& os, const RunMetrics& metrics) {
  os << kMetricsHeader << '\n';
  for (const StepMetrics& s : metrics.steps) {
    os << s.step << ',' << format_double(s.ce) << ',' << format_double(s.had) << ','
       << format_double(s.sl) << ',' << format_double(s.sd) << ','
       << format_double(s.total) << ',' << format_double(s.eval_sd) << '\n';
  }
}

}  // namespace mlot
