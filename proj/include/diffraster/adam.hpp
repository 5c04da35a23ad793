#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "diffraster/errors.hpp"

namespace diffraster {

template <typename T>
struct AdamConfig {
  T lr = T(1e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

template <typename T>
struct AdamState {
  AdamConfig<T> config;
  std::int64_t step = 0;
  std::vector<T> m, v;

  AdamState() = default;
  explicit AdamState(std::size_t n, AdamConfig<T> cfg = {})
      : config(cfg), m(n, T(0)), v(n, T(0)) {}
};

// Standard bias-corrected Adam update, in place.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads,
               AdamState<T>& state) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ShapeMismatch("adam_step: parameter/gradient/state size mismatch");
  for (const T g : grads)
    if (!std::isfinite(g)) throw NonFiniteGradient("adam_step: gradient is not finite");
  ++state.step;
  const AdamConfig<T>& c = state.config;
  const T bc1 = T(1) - std::pow(c.beta1, T(state.step));
  const T bc2 = T(1) - std::pow(c.beta2, T(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i];
    state.m[i] = c.beta1 * state.m[i] + (T(1) - c.beta1) * g;
    state.v[i] = c.beta2 * state.v[i] + (T(1) - c.beta2) * g * g;
    const T m_hat = state.m[i] / bc1;
    const T v_hat = state.v[i] / bc2;
    params[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

}  // namespace diffraster
