#include "ileumnet/optim.hpp"

#include <cmath>

namespace ileumnet {

template <typename T>
AdamState<T>::AdamState(const ParameterSet<T>& params, AdamConfig cfg) : config(cfg) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    m.push_back(Tensor<T>::zeros_like(params[i]));
    v.push_back(Tensor<T>::zeros_like(params[i]));
  }
}

template <typename T>
void adam_step(ParameterSet<T>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& state) {
  require(grads.size() == params.size() && state.m.size() == params.size(), ErrorCode::kShapeMismatch,
          "adam_step: parameter, gradient and state counts differ");
  const AdamConfig& c = state.config;
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = params[i];
    const Tensor<T>& g = grads[i];
    require(g.shape() == p.shape(), ErrorCode::kShapeMismatch,
            "adam_step: gradient for " + params.name(i) + " has shape " + to_string(g.shape()));
    T* m = state.m[i].ptr();
    T* v = state.v[i].ptr();
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = g[k];
      const double mk = c.beta1 * m[k] + (1.0 - c.beta1) * gk;
      const double vk = c.beta2 * v[k] + (1.0 - c.beta2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double step = c.lr * (mk / bc1) / (std::sqrt(vk / bc2) + c.eps);
      p[k] = static_cast<T>(p[k] - step);
    }
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(ParameterSet<float>&, const std::vector<Tensor<float>>&, AdamState<float>&);
template void adam_step(ParameterSet<double>&, const std::vector<Tensor<double>>&, AdamState<double>&);

}  // namespace ileumnet
