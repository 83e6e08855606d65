// SPDX-License-Identifier: Apache-2.0
//
// Subcommands of the `mlot` tool. Each returns a process exit code:
//   0 success, 2 I/O or parse error, 3 shape or size limit, 4 numeric failure.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "mlot/core.hpp"
#include "mlot/harness.hpp"
#include "mlot/oracle.hpp"

namespace mlot {

inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 2;
inline constexpr int kExitShape = 3;
inline constexpr int kExitNumeric = 4;

int exit_code_for(ErrorKind kind);

struct LossArgs {
  std::filesystem::path teacher;
  std::filesystem::path student;
  std::optional<std::filesystem::path> labels;
  std::optional<std::filesystem::path> config;
  bool json = false;
};

int cmd_loss(const LossArgs& args, std::ostream& out, std::ostream& err);

struct SinkhornArgs {
  std::filesystem::path cost;
  double lambda = 0.1;
  std::size_t iterations = 20;
  std::filesystem::path out;
};

int cmd_sinkhorn(const SinkhornArgs& args, std::ostream& out, std::ostream& err);

struct OracleArgs {
  std::filesystem::path cost;
  ExactMethod method = ExactMethod::Assignment;
};

int cmd_oracle(const OracleArgs& args, std::ostream& out, std::ostream& err);

struct DistillArgs {
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;
  std::optional<DistillMode> mode;
};

int cmd_distill(const DistillArgs& args, std::ostream& out, std::ostream& err);

}  // namespace mlot
