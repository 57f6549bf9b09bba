// Copyright 2026 cbenc authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cbenc/tape.hpp"
#include "cbenc/types.hpp"

namespace cbenc {

template <class Scalar>
struct GradCheckReport {
  Scalar max_rel_err = Scalar(0);
  Index worst_input = -1;  // which input tensor held the worst entry
  Index worst_entry = -1;  // flat entry within it
};

/// Compares reverse-mode gradients against central finite differences
/// (f(x+eps) - f(x-eps)) / 2eps for every entry of every input.
///
/// `build` receives a tape plus the lifted inputs and must return a 1x1 loss.
/// Relative error uses |a - n| / max(1, |a|, |n|) so near-zero entries are
/// judged on absolute error.
template <class Scalar, class Build>
GradCheckReport<Scalar> grad_check(Build&& build, std::vector<MatX<Scalar>> inputs, Scalar eps) {
  auto eval = [&](const std::vector<MatX<Scalar>>& vals) -> Scalar {
    Tape<Scalar> tape;
    std::vector<Var<Scalar>> vars;
    vars.reserve(vals.size());
    for (const auto& v : vals) vars.push_back(tape.leaf(v, false));
    Var<Scalar> out = build(tape, vars);
    if (out.rows() != 1 || out.cols() != 1)
      throw DimensionError("grad_check: build must return a 1x1 scalar");
    return out.value()(0, 0);
  };

  // Analytic pass.
  Tape<Scalar> tape;
  std::vector<Var<Scalar>> vars;
  vars.reserve(inputs.size());
  for (const auto& v : inputs) vars.push_back(tape.leaf(v, true));
  Var<Scalar> out = build(tape, vars);
  if (out.rows() != 1 || out.cols() != 1)
    throw DimensionError("grad_check: build must return a 1x1 scalar");
  if (!std::isfinite(out.value()(0, 0))) throw NumericError("grad_check: non-finite loss");
  tape.backward(out);
  std::vector<MatX<Scalar>> analytic;
  analytic.reserve(vars.size());
  for (auto v : vars) {
    MatX<Scalar> g = tape.grad_of(v);
    require_finite(g, "grad_check analytic gradient");
    analytic.push_back(std::move(g));
  }

  GradCheckReport<Scalar> report;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    MatX<Scalar>& m = inputs[t];
    for (Index e = 0; e < m.size(); ++e) {
      const Scalar saved = m.data()[e];
      m.data()[e] = saved + eps;
      const Scalar fp = eval(inputs);
      m.data()[e] = saved - eps;
      const Scalar fm = eval(inputs);
      m.data()[e] = saved;
      const Scalar numeric = (fp - fm) / (Scalar(2) * eps);
      const Scalar a = analytic[t].data()[e];
      if (!std::isfinite(numeric)) throw NumericError("grad_check: non-finite finite-difference");
      const Scalar rel =
          std::abs(a - numeric) / std::max({Scalar(1), std::abs(a), std::abs(numeric)});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_input = static_cast<Index>(t);
        report.worst_entry = e;
      }
    }
  }
  return report;
}

}  // namespace cbenc
