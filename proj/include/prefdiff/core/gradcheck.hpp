#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "prefdiff/core/tensor.hpp"

namespace prefdiff {

/// Max over coordinates of |analytic - central| / max(1e-8, |analytic| + |central|).
/// `f` is evaluated at x +- h e_i for every coordinate i.
template <typename Scalar>
double grad_check(const std::function<double(const BasicTensor<Scalar>&)>& f, const BasicTensor<Scalar>& x,
                  const BasicTensor<Scalar>& analytic_grad, double h) {
  require(h > 0, "grad_check: step must be positive");
  require(x.size() == analytic_grad.size(), "grad_check: gradient size mismatch");
  BasicTensor<Scalar> probe = x;
  double worst = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    const Scalar orig = probe.data()[i];
    probe.data()[i] = static_cast<Scalar>(orig + h);
    const double fp = f(probe);
    probe.data()[i] = static_cast<Scalar>(orig - h);
    const double fm = f(probe);
    probe.data()[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) throw NumericError("grad_check: non-finite function value");
    const double central = (fp - fm) / (2.0 * h);
    const double analytic = static_cast<double>(analytic_grad.data()[i]);
    const double err = std::abs(analytic - central) / std::max(1e-8, std::abs(analytic) + std::abs(central));
    worst = std::max(worst, err);
  }
  return worst;
}

/// Checks every parameter of a model in place: `loss` recomputes the scalar
/// objective from the current parameter values. Analytic gradients must have
/// been accumulated into each Parameter::grad beforehand.
template <typename Scalar>
double grad_check_parameters(const ParameterList<Scalar>& params, const std::function<double()>& loss, double h) {
  double worst = 0.0;
  for (auto* p : params) {
    BasicTensor<Scalar> analytic = p->grad;
    BasicTensor<Scalar> saved = p->value;
    auto f = [&](const BasicTensor<Scalar>& probe) {
      p->value = probe;
      return loss();
    };
    worst = std::max(worst, grad_check<Scalar>(f, saved, analytic, h));
    p->value = saved;
  }
  return worst;
}

}  // namespace prefdiff
