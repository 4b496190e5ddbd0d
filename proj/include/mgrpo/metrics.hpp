// Copyright 2026 The mgrpo Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Tab-separated metrics and objective dumps, and EMA smoothing.

#ifndef MGRPO_METRICS_HPP_
#define MGRPO_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mgrpo/trainer.hpp"

namespace mgrpo {

// Shortest text that parses back to the same double; "nan" for NaN.
inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  for (int prec = 1; prec < 17; ++prec) {
    char tmp[32];
    std::snprintf(tmp, sizeof tmp, "%.*g", prec, v);
    if (std::strtod(tmp, nullptr) == v) return tmp;
  }
  return buf;
}

inline constexpr const char* kMetricsHeader =
    "step\tstage\tmode\tmean_main_reward\tmean_sub_reward\teval_success\tgrad_norm_M\tgrad_norm_S";

inline void write_metrics_header(std::ostream& out) { out << kMetricsHeader << '\n'; }

inline void write_metrics_row(std::ostream& out, const StepMetrics& m) {
  out << m.step << '\t' << static_cast<int>(m.stage) << '\t' << to_string(m.mode) << '\t'
      << format_real(m.mean_main_reward) << '\t' << format_real(m.mean_sub_reward) << '\t'
      << format_real(m.eval_success) << '\t' << format_real(m.grad_norm_main) << '\t'
      << format_real(m.grad_norm_sub) << '\n';
}

inline constexpr const char* kObjectivesHeader = "step\trole\tmu\tsigma\tJ\tgrad_norm";

// Two rows per step (main, sub); single-agent runs have no sub row.
inline void write_objective_rows(std::ostream& out, const StepMetrics& m) {
  auto row = [&](const char* role, const RoleStepStats& s) {
    out << m.step << '\t' << role << '\t' << format_real(s.mu) << '\t' << format_real(s.sigma) << '\t'
        << format_real(s.objective) << '\t' << format_real(s.grad_norm) << '\n';
  };
  row("main", m.main_stats);
  if (m.mode != Mode::kSingleAgent) row("sub", m.sub_stats);
}

// Reads one named column of a tab-separated table with a header row.
inline std::vector<double> read_column(std::istream& in, const std::string& column) {
  std::string line;
  if (!std::getline(in, line)) throw DataIntegrityError("metrics file is empty");
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string c;
    while (std::getline(ss, c, '\t')) cells.push_back(c);
    return cells;
  };
  const auto header = split(line);
  const auto it = std::find(header.begin(), header.end(), column);
  if (it == header.end()) throw DataIntegrityError("no column named '" + column + "'");
  const std::size_t col = static_cast<std::size_t>(it - header.begin());
  std::vector<double> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (col >= cells.size()) throw DataIntegrityError("line " + std::to_string(lineno) + ": missing cells");
    const std::string& c = cells[col];
    if (c == "nan") {
      out.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(c, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != c.size() || c.empty())
      throw DataIntegrityError("line " + std::to_string(lineno) + ": '" + c + "' is not a number");
    out.push_back(v);
  }
  return out;
}

// y_0 = x_0, y_t = alpha*x_t + (1-alpha)*y_{t-1}.
inline std::vector<double> ema(std::span<const double> x, double alpha) {
  require(alpha > 0.0 && alpha <= 1.0, "ema: alpha must lie in (0,1]");
  require(!x.empty(), "ema: empty series");
  std::vector<double> y(x.size());
  y[0] = x[0];
  if (alpha == 1.0) return {x.begin(), x.end()};
  // Incremental form: a constant series stays bit-identical, and the clamp
  // keeps rounding from stepping outside [y_{t-1}, x_t].
  for (std::size_t t = 1; t < x.size(); ++t) {
    const double v = y[t - 1] + alpha * (x[t] - y[t - 1]);
    y[t] = std::clamp(v, std::min(x[t], y[t - 1]), std::max(x[t], y[t - 1]));
  }
  return y;
}

}  // namespace mgrpo

#endif  // MGRPO_METRICS_HPP_
