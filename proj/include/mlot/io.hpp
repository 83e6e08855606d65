// SPDX-License-Identifier: Apache-2.0
//
// Text formats used by the command-line tool.
//
//   logit file   {"tokens": T, "vocab": V, "logits": [[...V numbers], ...T rows]}
//   matrix CSV   one row per line, comma separated, no header
//   labels       one non-negative integer per line
//   config       key=value lines, '#' starts a comment
//
// Parsing is strict. Failures throw Error(ErrorKind::Io) with a message of the
// form "<path>:<line>: <reason>".

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mlot/composite.hpp"
#include "mlot/core.hpp"
#include "mlot/harness.hpp"

namespace mlot {

// 17 significant digits, enough to round-trip any double.
std::string format_double(double v);

LogitMatrix parse_logit_file(std::string_view text, const std::string& source);
LogitMatrix read_logit_file(const std::filesystem::path& path);
std::string format_logit_file(const LogitMatrix& logits);

Matrix parse_matrix_csv(std::string_view text, const std::string& source);
Matrix read_matrix_csv(const std::filesystem::path& path);
std::string format_matrix_csv(const Matrix& m);

std::vector<std::size_t> parse_labels(std::string_view text, const std::string& source);
std::vector<std::size_t> read_labels(const std::filesystem::path& path);

// Writes to a sibling temporary file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_text_file(const std::filesystem::path& path);

// key=value settings. Callers take() the keys they understand and then call
// finish(), which rejects whatever is left.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text, const std::string& source);
  static KeyValueConfig read(const std::filesystem::path& path);

  std::optional<std::string> take(const std::string& key);
  double take_double(const std::string& key, double fallback);
  std::size_t take_count(const std::string& key, std::size_t fallback);
  std::uint64_t take_u64(const std::string& key, std::uint64_t fallback);
  bool take_bool(const std::string& key, bool fallback);

  void finish() const;

 private:
  struct Entry {
    std::string value;
    std::size_t line;
  };
  std::size_t entry_line(const std::string& key) const;
  [[noreturn]] void fail(const std::string& key, const std::string& reason) const;

  std::string source_;
  std::map<std::string, Entry> entries_;
};

// alpha, beta, gamma, tau_sl, tau_sd, k, lambda, n_iters.
LossWeights take_loss_weights(KeyValueConfig& config);

// seed, m, n, T, contexts, steps, lr, sharpness, labeled, plus the loss keys.
DistillConfig take_distill_config(KeyValueConfig& config);

}  // namespace mlot
