// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "voxfuse/graph.hpp"

namespace voxfuse {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t leaf = 0;   // index into the leaf list of the worst entry
  std::size_t index = 0;  // element index of the worst entry
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients against central differences, in 64-bit.
///
/// `f(graph)` must build a scalar loss that reads the given leaves through
/// `graph.param(...)`. The error per entry is
/// |analytic - numeric| / max(1, |analytic|); the maximum is returned.
template <typename F>
GradCheckReport grad_check(F&& f, const std::vector<Param<double>*>& leaves, double eps) {
  if (!(eps >= 1e-6 && eps <= 1e-3)) throw DomainError("grad_check: eps must lie in [1e-6, 1e-3]");

  std::vector<std::vector<double>> analytic(leaves.size());
  {
    BasicGraph<double> g;
    for (auto* p : leaves) g.param(*p);
    const Var loss = f(g);
    g.check_finite();
    g.backward(loss);
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      const auto* gr = g.param_grad(*leaves[i]);
      analytic[i] = gr ? *gr : std::vector<double>(leaves[i]->value.size(), 0.0);
    }
  }

  auto evaluate = [&f]() {
    BasicGraph<double> g;
    const Var loss = f(g);
    g.check_finite();
    return g.value(loss).values.at(0);
  };

  GradCheckReport report;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& values = leaves[li]->value.values;
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double saved = values[j];
      values[j] = saved + eps;
      const double up = evaluate();
      values[j] = saved - eps;
      const double down = evaluate();
      values[j] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[li][j];
      const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      if (!std::isfinite(rel)) throw NumericError("grad_check: non-finite difference at leaf " + std::to_string(li));
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.leaf = li;
        report.index = j;
      }
    }
  }
  return report;
}

}  // namespace voxfuse
