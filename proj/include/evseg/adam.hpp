#pragma once

#include <cstdint>
#include <vector>

#include "evseg/tensor.hpp"

namespace evseg {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

AdamState make_adam_state(const std::vector<Parameter*>& params, const AdamConfig& config = {});

/// One bias-corrected Adam update of every parameter; increments `state.step`.
void adam_step(const std::vector<Parameter*>& params, const std::vector<Tensor>& grads,
               AdamState& state);

}  // namespace evseg
