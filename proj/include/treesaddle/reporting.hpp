#pragma once

// Text artifacts emitted by the command-line tool and the test drivers:
// residual-history CSV, JSON run summaries, and the solve-count table.
// Number formatting goes through std::to_chars, so output is locale
// independent with '.' as the decimal separator.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "treesaddle/gmres.hpp"
#include "treesaddle/types.hpp"

namespace treesaddle {

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::scientific, 16);
  return std::string(buf, res.ptr);
}

/// CSV of the residual history: header `iter,rel_residual`, one row per
/// iteration starting at iteration 0 with value 1.
inline std::string residual_csv(const std::vector<double>& relative_residuals) {
  std::string out = "iter,rel_residual\n";
  for (size_t k = 0; k < relative_residuals.size(); ++k) {
    out += std::to_string(k);
    out += ',';
    out += format_double(relative_residuals[k]);
    out += '\n';
  }
  return out;
}

inline nlohmann::json summary_json(const SolveReport& report) {
  nlohmann::json j;
  j["iterations"] = report.iterations;
  j["converged"] = report.converged;
  j["relative_residual"] =
      report.relative_residuals.empty() ? 1.0 : report.relative_residuals.back();
  j["true_relative_residual"] = report.true_relative_residual;
  j["breakdown"] = report.breakdown;
  j["solve_counts"] = {{"setup", report.setup_solves},
                       {"iteration", report.apply_solves},
                       {"total", report.total_solves()}};
  return j;
}

struct CountRow {
  std::string label;
  bool converged = false;
  int iterations = 0;
  std::int64_t solves = 0;  // setup plus iteration solves
};

/// Fixed-width table of per-preconditioner subsystem-solve counts.
inline std::string count_table(const std::vector<CountRow>& rows) {
  size_t width = std::string("Preconditioner").size();
  for (const CountRow& r : rows) width = std::max(width, r.label.size());
  std::string out = "Preconditioner";
  out.append(width - std::string("Preconditioner").size() + 2, ' ');
  out += "Iterations  Converged  Solved subsystems\n";
  for (const CountRow& r : rows) {
    std::string line = r.label;
    line.append(width - r.label.size() + 2, ' ');
    std::string iters = std::to_string(r.iterations);
    line += iters;
    line.append(iters.size() < 10 ? 10 - iters.size() + 2 : 2, ' ');
    line += r.converged ? "yes" : "no ";
    line.append(8, ' ');
    line += std::to_string(r.solves);
    out += line;
    out += '\n';
  }
  return out;
}

}  // namespace treesaddle
