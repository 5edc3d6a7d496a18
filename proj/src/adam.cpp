#include "evseg/adam.hpp"

#include <cmath>

#include "evseg/error.hpp"

namespace evseg {

AdamState make_adam_state(const std::vector<Parameter*>& params, const AdamConfig& config) {
  AdamState state;
  state.config = config;
  for (const Parameter* p : params) {
    state.first_moment.emplace_back(p->value.shape(), 0.0);
    state.second_moment.emplace_back(p->value.shape(), 0.0);
  }
  return state;
}

void adam_step(const std::vector<Parameter*>& params, const std::vector<Tensor>& grads,
               AdamState& state) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and moment counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Shape& s = params[i]->value.shape();
    if (grads[i].shape() != s || state.first_moment[i].shape() != s ||
        state.second_moment[i].shape() != s) {
      throw ShapeError("adam_step: shape mismatch for " + params[i]->name);
    }
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& w = params[i]->value;
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    const Tensor& g = grads[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      w[j] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

}  // namespace evseg
