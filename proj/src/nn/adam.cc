#include "narrative/nn/adam.h"

#include <cmath>

namespace narrative::nn {

void adam_step(ParameterSet& params, AdamState& state, double lr) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (const auto& name : params.names()) {
    Tensor& value = params.value(name);
    const Tensor& g = params.grad(name);
    auto [m_it, m_new] = state.first_moment.try_emplace(name, Tensor::Zero(g.rows(), g.cols()));
    auto [v_it, v_new] = state.second_moment.try_emplace(name, Tensor::Zero(g.rows(), g.cols()));
    Tensor& m = m_it->second;
    Tensor& v = v_it->second;
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    value.array() -= lr * (m.array() / correction1) /
                     ((v.array() / correction2).sqrt() + state.epsilon);
  }
}

}  // namespace narrative::nn
