#pragma once

#include <cstdint>
#include <vector>

#include "ileumnet/model.hpp"

namespace ileumnet {

struct AdamConfig {
  double lr = 5e-6;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

/// Moment buffers shaped like the parameters they follow.
template <typename T>
struct AdamState {
  AdamConfig config;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t t = 0;

  AdamState() = default;
  AdamState(const ParameterSet<T>& params, AdamConfig cfg);
};

/// Bias-corrected Adam update, in place.
template <typename T>
void adam_step(ParameterSet<T>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& state);

}  // namespace ileumnet
