// SPDX-License-Identifier: Apache-2.0

#include "mlot/commands.hpp"

#include <json.hpp>

#include <cstdio>
#include <ostream>
#include <sstream>

#include "mlot/composite.hpp"
#include "mlot/io.hpp"
#include "mlot/seq_ot.hpp"

namespace mlot {

namespace {

int report(const Error& e, std::ostream& err) {
  err << "error: " << e.what() << '\n';
  if (e.kind() == ErrorKind::NumericalUnderflow) {
    err << "hint: try a larger --lambda\n";
  }
  return exit_code_for(e.kind());
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io:
    case ErrorKind::InvalidConfig:
      return kExitIo;
    case ErrorKind::InvalidInput:
    case ErrorKind::TooLargeForExact:
      return kExitShape;
    case ErrorKind::NumericalUnderflow:
    case ErrorKind::NumericalFailure:
      return kExitNumeric;
  }
  return kExitIo;
}

int cmd_loss(const LossArgs& args, std::ostream& out, std::ostream& err) {
  try {
    const LogitMatrix teacher = read_logit_file(args.teacher);
    const LogitMatrix student = read_logit_file(args.student);
    Labels labels;
    if (args.labels) labels = read_labels(*args.labels);
    LossWeights w;
    if (args.config) {
      KeyValueConfig config = KeyValueConfig::read(*args.config);
      w = take_loss_weights(config);
      config.finish();
    }
    w.validate();

    const LossBreakdown b = total_loss(teacher, student, labels, w);
    if (args.json) {
      const nlohmann::json doc = {{"ce", b.ce},       {"had", b.had},     {"sl", b.sl},
                                  {"sd", b.sd},       {"total", b.total}, {"k_eff", b.rank_sl.k}};
      out << doc.dump() << '\n';
    } else {
      out << "ce     " << fixed6(b.ce) << '\n'
          << "had    " << fixed6(b.had) << '\n'
          << "sl     " << fixed6(b.sl) << '\n'
          << "sd     " << fixed6(b.sd) << '\n'
          << "total  " << fixed6(b.total) << '\n'
          << "k_eff  " << b.rank_sl.k << '\n';
    }
    return kExitOk;
  } catch (const Error& e) {
    return report(e, err);
  }
}

int cmd_sinkhorn(const SinkhornArgs& args, std::ostream& out, std::ostream& err) {
  try {
    const CostMatrix cost(read_matrix_csv(args.cost));
    SinkhornConfig config;
    config.lambda = args.lambda;
    config.iterations = args.iterations;
    const TransportPlan plan = sinkhorn_plan(cost, config);
    write_file_atomic(args.out, format_matrix_csv(plan.values()));
    out << "value " << format_double(sd_loss(cost, plan)) << '\n';
    return kExitOk;
  } catch (const Error& e) {
    return report(e, err);
  }
}

int cmd_oracle(const OracleArgs& args, std::ostream& out, std::ostream& err) {
  try {
    const Matrix cost = read_matrix_csv(args.cost);
    const ExactOTResult result = exact_ot(cost, args.method);
    out << "value " << format_double(result.value) << '\n' << "permutation [";
    for (std::size_t i = 0; i < result.plan.size(); ++i) {
      out << (i ? "," : "") << result.plan[i];
    }
    out << "]\n";
    return kExitOk;
  } catch (const Error& e) {
    return report(e, err);
  }
}

int cmd_distill(const DistillArgs& args, std::ostream& out, std::ostream& err) {
  try {
    DistillConfig cfg;
    if (args.config) {
      KeyValueConfig config = KeyValueConfig::read(*args.config);
      cfg = take_distill_config(config);
      config.finish();
    }
    if (args.mode) cfg.mode = *args.mode;

    std::ostringstream csv;
    try {
      const RunMetrics metrics = run_distillation(cfg);
      write_metrics_csv(csv, metrics);
      write_file_atomic(args.out, csv.str());
      const StepMetrics& last = metrics.steps.back();
      out << "mode " << mode_name(cfg.mode) << ", " << metrics.steps.size()
          << " steps, final total " << format_double(last.total) << ", eval_sd "
          << format_double(metrics.steps.front().eval_sd) << " -> "
          << format_double(last.eval_sd) << '\n';
      return kExitOk;
    } catch (const DivergenceError& e) {
      write_metrics_csv(csv, e.partial());
      write_file_atomic(args.out, csv.str());
      return report(e, err);
    }
  } catch (const Error& e) {
    return report(e, err);
  }
}

}  // namespace mlot
