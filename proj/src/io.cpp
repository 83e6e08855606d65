// SPDX-License-Identifier: Apache-2.0

#include "mlot/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace mlot {

namespace {

using nlohmann::json;

[[noreturn]] void parse_fail(const std::string& source, std::size_t line,
                             const std::string& reason) {
  throw Error(ErrorKind::Io, source + ":" + std::to_string(line) + ": " + reason);
}

std::size_t line_at(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(
                 std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

// Line holding the opening bracket of logits[row], or the line of the key
// itself when the row cannot be located.
std::size_t logits_row_line(std::string_view text, std::size_t row) {
  const std::size_t key = text.find("\"logits\"");
  if (key == std::string_view::npos) return 1;
  int depth = 0;
  std::size_t seen = 0;
  bool in_string = false;
  for (std::size_t i = key + 8; i < text.size(); ++i) {
    const char ch = text[i];
    if (ch == '"') in_string = !in_string;
    if (in_string) continue;
    if (ch == '[') {
      ++depth;
      if (depth == 2) {
        if (seen == row) return line_at(text, i);
        ++seen;
      }
    } else if (ch == ']') {
      if (--depth == 0) break;
    }
  }
  return line_at(text, key);
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  // A trailing newline leaves one empty line behind.
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

template <typename Int>
std::optional<Int> parse_unsigned(std::string_view s) {
  s = trim(s);
  Int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, path.string() + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorKind::Io, path.string() + ": read failed");
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, tmp.string() + ": cannot open for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(ErrorKind::Io, tmp.string() + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(ErrorKind::Io, path.string() + ": rename failed: " + ec.message());
  }
}

LogitMatrix parse_logit_file(std::string_view text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    parse_fail(source, line_at(text, e.byte > 0 ? e.byte - 1 : 0), e.what());
  }
  if (!doc.is_object()) parse_fail(source, 1, "expected a top-level object");
  for (const auto& [key, _] : doc.items()) {
    if (key != "tokens" && key != "vocab" && key != "logits") {
      parse_fail(source, line_at(text, text.find("\"" + key + "\"")),
                 "unknown key '" + key + "'");
    }
  }
  for (const char* key : {"tokens", "vocab", "logits"}) {
    if (!doc.contains(key)) parse_fail(source, 1, std::string("missing key '") + key + "'");
  }
  const json& tokens = doc["tokens"];
  const json& vocab = doc["vocab"];
  if (!tokens.is_number_unsigned() || !vocab.is_number_unsigned()) {
    parse_fail(source, line_at(text, text.find("\"tokens\"")),
               "'tokens' and 'vocab' must be non-negative integers");
  }
  const auto rows = tokens.get<std::size_t>();
  const auto cols = vocab.get<std::size_t>();
  const json& logits = doc["logits"];
  const std::size_t logits_line = line_at(text, text.find("\"logits\""));
  if (!logits.is_array()) parse_fail(source, logits_line, "'logits' must be an array");
  if (logits.size() != rows) {
    parse_fail(source, logits_line,
               "'logits' has " + std::to_string(logits.size()) + " rows, declared tokens=" +
                   std::to_string(rows));
  }
  if (rows < 1 || cols < 2) {
    parse_fail(source, 1, "need tokens >= 1 and vocab >= 2");
  }
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const json& row = logits[r];
    if (!row.is_array() || row.size() != cols) {
      parse_fail(source, logits_row_line(text, r),
                 "logits row " + std::to_string(r) + " must hold " + std::to_string(cols) +
                     " numbers");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      const json& v = row[c];
      if (!v.is_number() || !std::isfinite(v.get<double>())) {
        parse_fail(source, logits_row_line(text, r),
                   "logits row " + std::to_string(r) + " column " + std::to_string(c) +
                       " is not a finite number");
      }
      m(r, c) = v.get<double>();
    }
  }
  return LogitMatrix(std::move(m));
}

LogitMatrix read_logit_file(const std::filesystem::path& path) {
  return parse_logit_file(read_text_file(path), path.string());
}

std::string format_logit_file(const LogitMatrix& logits) {
  std::ostringstream os;
  os << "{\n  \"tokens\": " << logits.rows() << ",\n  \"vocab\": " << logits.cols()
     << ",\n  \"logits\": [\n";
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    os << "    [";
    for (std::size_t c = 0; c < logits.cols(); ++c) {
      if (c) os << ", ";
      os << format_double(logits.values()(r, c));
    }
    os << (r + 1 < logits.rows() ? "],\n" : "]\n");
  }
  os << "  ]\n}\n";
  return os.str();
}

Matrix parse_matrix_csv(std::string_view text, const std::string& source) {
  const auto lines = split_lines(text);
  if (lines.empty()) parse_fail(source, 1, "empty matrix");
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::vector<double> row;
    std::string_view rest = lines[i];
    while (true) {
      const std::size_t comma = rest.find(',');
      const auto field = rest.substr(0, comma);
      const auto v = parse_number(field);
      if (!v) {
        parse_fail(source, i + 1, "field " + std::to_string(row.size() + 1) +
                                      " is not a finite number: '" +
                                      std::string(trim(field)) + "'");
      }
      row.push_back(*v);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      parse_fail(source, i + 1, "expected " + std::to_string(rows.front().size()) +
                                    " fields, found " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  return Matrix::from_rows(rows);
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
  return parse_matrix_csv(read_text_file(path), path.string());
}

std::string format_matrix_csv(const Matrix& m) {
  std::string out;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      out += format_double(m(r, c));
    }
    out += '\n';
  }
  return out;
}

std::vector<std::size_t> parse_labels(std::string_view text, const std::string& source) {
  std::vector<std::size_t> labels;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto v = parse_unsigned<std::size_t>(lines[i]);
    if (!v) parse_fail(source, i + 1, "expected a non-negative integer label");
    labels.push_back(*v);
  }
  return labels;
}

std::vector<std::size_t> read_labels(const std::filesystem::path& path) {
  return parse_labels(read_text_file(path), path.string());
}

KeyValueConfig KeyValueConfig::parse(std::string_view text, const std::string& source) {
  KeyValueConfig config;
  config.source_ = source;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string_view line = lines[i];
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) parse_fail(source, i + 1, "expected key=value");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) parse_fail(source, i + 1, "empty key");
    if (!config.entries_.emplace(key, Entry{value, i + 1}).second) {
      parse_fail(source, i + 1, "duplicate key '" + key + "'");
    }
  }
  return config;
}

KeyValueConfig KeyValueConfig::read(const std::filesystem::path& path) {
  return parse(read_text_file(path), path.string());
}

void KeyValueConfig::fail(const std::string& key, const std::string& reason) const {
  parse_fail(source_, entries_.at(key).line, key + ": " + reason);
}

std::size_t KeyValueConfig::entry_line(const std::string& key) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? 0 : it->second.line;
}

std::optional<std::string> KeyValueConfig::take(const std::string& key) {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  std::string value = it->second.value;
  entries_.erase(it);
  return value;
}

double KeyValueConfig::take_double(const std::string& key, double fallback) {
  const auto line = entry_line(key);
  const auto raw = take(key);
  if (!raw) return fallback;
  const auto v = parse_number(*raw);
  if (!v) parse_fail(source_, line, key + ": expected a finite number");
  return *v;
}

std::size_t KeyValueConfig::take_count(const std::string& key, std::size_t fallback) {
  const auto line = entry_line(key);
  const auto raw = take(key);
  if (!raw) return fallback;
  const auto v = parse_unsigned<std::size_t>(*raw);
  if (!v) parse_fail(source_, line, key + ": expected a non-negative integer");
  return *v;
}

std::uint64_t KeyValueConfig::take_u64(const std::string& key, std::uint64_t fallback) {
  const auto line = entry_line(key);
  const auto raw = take(key);
  if (!raw) return fallback;
  const auto v = parse_unsigned<std::uint64_t>(*raw);
  if (!v) parse_fail(source_, line, key + ": expected a non-negative integer");
  return *v;
}

bool KeyValueConfig::take_bool(const std::string& key, bool fallback) {
  const auto line = entry_line(key);
  const auto raw = take(key);
  if (!raw) return fallback;
  if (*raw == "true" || *raw == "1") return true;
  if (*raw == "false" || *raw == "0") return false;
  parse_fail(source_, line, key + ": expected true or false");
}

void KeyValueConfig::finish() const {
  if (entries_.empty()) return;
  const auto first = std::min_element(
      entries_.begin(), entries_.end(),
      [](const auto& a, const auto& b) { return a.second.line < b.second.line; });
  fail(first->first, "unknown key");
}

LossWeights take_loss_weights(KeyValueConfig& config) {
  LossWeights w;
  w.alpha = config.take_double("alpha", w.alpha);
  w.beta = config.take_double("beta", w.beta);
  w.gamma = config.take_double("gamma", w.gamma);
  w.tau_sl = config.take_double("tau_sl", w.tau_sl);
  w.tau_sd = config.take_double("tau_sd", w.tau_sd);
  w.k = config.take_count("k", w.k);
  w.sinkhorn.lambda = config.take_double("lambda", w.sinkhorn.lambda);
  w.sinkhorn.iterations = config.take_count("n_iters", w.sinkhorn.iterations);
  return w;
}

DistillConfig take_distill_config(KeyValueConfig& config) {
  DistillConfig cfg;
  cfg.seed = config.take_u64("seed", cfg.seed);
  cfg.m = config.take_count("m", cfg.m);
  cfg.n = config.take_count("n", cfg.n);
  cfg.T = config.take_count("T", cfg.T);
  cfg.contexts = config.take_count("contexts", cfg.contexts);
  cfg.steps = config.take_count("steps", cfg.steps);
  cfg.lr = config.take_double("lr", cfg.lr);
  cfg.sharpness = config.take_double("sharpness", cfg.sharpness);
  cfg.labeled = config.take_bool("labeled", cfg.labeled);
  cfg.weights = take_loss_weights(config);
  return cfg;
}

}  // namespace mlot
