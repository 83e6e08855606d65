// SPDX-License-Identifier: Apache-2.0
//
// mlot: distillation losses and transport solvers on dumped logits.

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>

#include "mlot/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Multi-level optimal transport distillation losses"};
  app.require_subcommand(1);

  mlot::LossArgs loss;
  std::string labels, loss_config;
  auto* loss_cmd = app.add_subcommand("loss", "Evaluate the distillation loss on two logit files");
  loss_cmd->add_option("--teacher", loss.teacher, "Teacher logit file")->required();
  loss_cmd->add_option("--student", loss.student, "Student logit file")->required();
  loss_cmd->add_option("--labels", labels, "Label file, one index per line");
  loss_cmd->add_option("--config", loss_config, "key=value loss settings");
  loss_cmd->add_flag("--json", loss.json, "Print a JSON object");

  mlot::SinkhornArgs sinkhorn;
  auto* sinkhorn_cmd = app.add_subcommand("sinkhorn", "Entropic transport plan for a cost CSV");
  sinkhorn_cmd->add_option("--cost", sinkhorn.cost, "Square cost matrix CSV")->required();
  sinkhorn_cmd->add_option("--lambda", sinkhorn.lambda, "Entropy weight")->capture_default_str();
  sinkhorn_cmd->add_option("--iters", sinkhorn.iterations, "Normalisation rounds")
      ->capture_default_str();
  sinkhorn_cmd->add_option("--out", sinkhorn.out, "Plan CSV to write")->required();

  mlot::OracleArgs oracle;
  const std::map<std::string, mlot::ExactMethod> methods{
      {"brute", mlot::ExactMethod::BruteForce}, {"assign", mlot::ExactMethod::Assignment}};
  auto* oracle_cmd = app.add_subcommand("oracle", "Exact transport over unit-marginal plans");
  oracle_cmd->add_option("--cost", oracle.cost, "Square cost matrix CSV")->required();
  oracle_cmd->add_option("--method", oracle.method, "brute | assign")
      ->transform(CLI::CheckedTransformer(methods, CLI::ignore_case))
      ->default_str("assign");

  mlot::DistillArgs distill;
  std::string distill_config, mode;
  auto* distill_cmd = app.add_subcommand("distill", "Run the toy distillation harness");
  distill_cmd->add_option("--config", distill_config, "key=value harness settings");
  distill_cmd->add_option("--out", distill.out, "Metrics CSV to write")->required();
  distill_cmd->add_option("--mode", mode, "multilevel_ot | ce_only | uld")
      ->check(CLI::IsMember({"multilevel_ot", "ce_only", "uld"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mlot::kExitIo;
  }

  if (*loss_cmd) {
    if (!labels.empty()) loss.labels = labels;
    if (!loss_config.empty()) loss.config = loss_config;
    return mlot::cmd_loss(loss, std::cout, std::cerr);
  }
  if (*sinkhorn_cmd) return mlot::cmd_sinkhorn(sinkhorn, std::cout, std::cerr);
  if (*oracle_cmd) return mlot::cmd_oracle(oracle, std::cout, std::cerr);
  if (!distill_config.empty()) distill.config = distill_config;
  if (!mode.empty()) distill.mode = mlot::parse_mode(mode);
  return mlot::cmd_distill(distill, std::cout, std::cerr);
}
