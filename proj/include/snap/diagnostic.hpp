#pragma once

#include <string>
#include <vector>

namespace snap {

enum class Severity { error, warning };

struct Diagnostic {
  Severity severity = Severity::error;
  std::string code;
  std::string path;  // e.g. "abilities[2].dyn_prob.keep"
  std::string message;
  std::vector<int> involved_rows;
};

using Diagnostics = std::vector<Diagnostic>;

inline Diagnostic error(std::string code, std::string path, std::string message, std::vector<int> rows = {}) {
  return {Severity::error, std::move(code), std::move(path), std::move(message), std::move(rows)};
}

inline Diagnostic warning(std::string code, std::string path, std::string message, std::vector<int> rows = {}) {
  return {Severity::warning, std::move(code), std::move(path), std::move(message), std::move(rows)};
}

bool has_errors(const Diagnostics& ds);
std::size_t count_errors(const Diagnostics& ds);
// One line: "error code at path: message [rows 8, 9]".
std::string format(const Diagnostic& d);

}  // namespace snap
