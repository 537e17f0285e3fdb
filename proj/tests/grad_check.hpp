#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "normdiff/autodiff.hpp"

namespace testutil {

// Central-difference check of d(loss)/d(param) for every parameter entry.
// Returns the worst relative error (absolute error scaled by
// max(1, |analytic|, |numeric|)).
inline double grad_check(
    const std::vector<normdiff::ad::NodePtr>& params,
    const std::function<normdiff::ad::NodePtr()>& make_loss, double h = 1e-5) {
  using namespace normdiff;
  {
    auto loss = make_loss();
    ad::zero_grad(params);
    for (auto& p : params)
      for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] = 0.0;
    ad::backward(loss);
  }
  double worst = 0.0;
  for (auto& p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double up = make_loss()->value[0];
      p->value[i] = saved - h;
      const double dn = make_loss()->value[0];
      p->value[i] = saved;
      const double numeric = (up - dn) / (2.0 * h);
      const double analytic = p->grad[i];
      const double err = std::abs(numeric - analytic) /
                         std::max({1.0, std::abs(numeric), std::abs(analytic)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace testutil
