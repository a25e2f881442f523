#pragma once

#include <cmath>
#include <cstdint>

#include "prefdiff/core/tensor.hpp"

namespace prefdiff {

struct AdamHyper {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
struct AdamState {
  BasicTensor<Scalar> first_moment;
  BasicTensor<Scalar> second_moment;
  std::uint64_t step_count = 0;
  AdamHyper hyper;

  AdamState() = default;
  AdamState(const std::vector<Index>& shape, AdamHyper h) : first_moment(shape), second_moment(shape), hyper(h) {}
};

/// One bias-corrected Adam update, in place. Works on the flat coefficient
/// vectors, so the result does not depend on how the parameter is shaped.
template <typename Scalar>
void adam_update(BasicTensor<Scalar>& param, const BasicTensor<Scalar>& grad, AdamState<Scalar>& state) {
  require(param.size() == grad.size() && param.shape() == grad.shape(), "adam: parameter and gradient shapes differ");
  require(state.first_moment.size() == param.size() && state.second_moment.size() == param.size(),
          "adam: optimizer state shape does not match parameter");
  if (!grad.all_finite()) throw NumericError("adam: non-finite gradient");

  state.step_count += 1;
  const AdamHyper& h = state.hyper;
  const double t = static_cast<double>(state.step_count);
  const Scalar b1 = static_cast<Scalar>(h.beta1);
  const Scalar b2 = static_cast<Scalar>(h.beta2);
  const Scalar c1 = static_cast<Scalar>(1.0 / (1.0 - std::pow(h.beta1, t)));
  const Scalar c2 = static_cast<Scalar>(1.0 / (1.0 - std::pow(h.beta2, t)));
  const Scalar lr = static_cast<Scalar>(h.learning_rate);
  const Scalar eps = static_cast<Scalar>(h.epsilon);

  auto m = state.first_moment.data().array();
  auto v = state.second_moment.data().array();
  auto g = grad.data().array();
  m = b1 * m + (Scalar(1) - b1) * g;
  v = b2 * v + (Scalar(1) - b2) * g.square();
  param.data().array() -= lr * (m * c1) / ((v * c2).sqrt() + eps);
}

/// Functional form: returns the updated parameter and state.
template <typename Scalar>
std::pair<BasicTensor<Scalar>, AdamState<Scalar>> adam_step(BasicTensor<Scalar> param, const BasicTensor<Scalar>& grad,
                                                             AdamState<Scalar> state) {
  adam_update(param, grad, state);
  return {std::move(param), std::move(state)};
}

/// Adam over a whole parameter list; one state per parameter.
template <typename Scalar>
class AdamOptimizer {
 public:
  AdamOptimizer(ParameterList<Scalar> params, AdamHyper hyper) : params_(std::move(params)) {
    states_.reserve(params_.size());
    for (auto* p : params_) states_.emplace_back(p->value.shape(), hyper);
  }

  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) adam_update(params_[i]->value, params_[i]->grad, states_[i]);
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  std::uint64_t step_count() const { return states_.empty() ? 0 : states_.front().step_count; }

 private:
  ParameterList<Scalar> params_;
  std::vector<AdamState<Scalar>> states_;
};

}  // namespace prefdiff
