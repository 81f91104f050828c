#pragma once

// Central finite-difference oracle for tape gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "hidfd/tape.hpp"
#include "hidfd/tensor.hpp"

namespace hidfd::testing {

struct GradCheck {
  double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double abs_error = 0.0;  // max entry difference
  double analytic_norm = 0.0;
  std::size_t entries = 0;
};

// `build` records the loss on a fresh tape, reading the current values of
// `params`. Gradients come from the loss graph; numeric derivatives from
// (f(p + h) - f(p - h)) / 2h per entry.
inline GradCheck check_gradients(const std::function<Var(Tape&)>& build,
                                 const std::vector<Parameter*>& params, double h = 1e-5) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = build(tape);
    tape.backward(loss);
  }
  std::vector<double> analytic;
  for (Parameter* p : params) analytic.insert(analytic.end(), p->grad.data().begin(), p->grad.data().end());

  auto eval = [&] {
    Tape tape;
    return build(tape).value().item();
  };
  std::vector<double> numeric;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double fp = eval();
      p->value[i] = saved - h;
      const double fm = eval();
      p->value[i] = saved;
      numeric.push_back((fp - fm) / (2.0 * h));
    }
  }

  GradCheck r;
  r.entries = analytic.size();
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double d = analytic[i] - numeric[i];
    diff += d * d;
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
    r.abs_error = std::max(r.abs_error, std::abs(d));
  }
  r.analytic_norm = std::sqrt(na);
  const double scale = std::max(std::sqrt(na), std::sqrt(nn));
  r.rel_error = scale > 0.0 ? std::sqrt(diff) / scale : 0.0;
  return r;
}

}  // namespace hidfd::testing
