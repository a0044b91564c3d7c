#include "snap/diagnostic.hpp"

#include <algorithm>

namespace snap {

bool has_errors(const Diagnostics& ds) {
  return std::any_of(ds.begin(), ds.end(), [](const Diagnostic& d) { return d.severity == Severity::error; });
}

std::size_t count_errors(const Diagnostics& ds) {
  return static_cast<std::size_t>(
      std::count_if(ds.begin(), ds.end(), [](const Diagnostic& d) { return d.severity == Severity::error; }));
}

std::string format(const Diagnostic& d) {
  std::string out = d.severity == Severity::error ? "error " : "warning ";
  out += d.code;
  if (!d.path.empty()) out += " at " + d.path;
  out += ": " + d.message;
  if (!d.involved_rows.empty()) {
    out += " [rows ";
    for (std::size_t i = 0; i < d.involved_rows.size(); ++i) out += (i ? ", " : "") + std::to_string(d.involved_rows[i]);
    out += ']';
  }
  return out;
}

}  // namespace snap
