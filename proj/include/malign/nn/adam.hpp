#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "malign/error.hpp"

namespace malign::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Step decay: base / divisor^floor(epoch / step_epochs).
struct StepSchedule {
  double base = 1e-3;
  std::size_t step_epochs = 100;
  double divisor = 10.0;

  double at(std::size_t epoch) const {
    const auto k = step_epochs ? epoch / step_epochs : 0;
    double lr = base;
    for (std::size_t i = 0; i < k; ++i) lr /= divisor;
    return lr;
  }
};

template <typename Scalar>
struct AdamState {
  std::vector<Scalar> m;
  std::vector<Scalar> v;
  std::uint64_t step = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, Scalar(0)), v(n, Scalar(0)) {}
};

// Bias-corrected Adam. Gradients are validated before any parameter changes.
template <typename Scalar>
void adam_step(std::span<Scalar> params, std::span<const Scalar> grads, AdamState<Scalar>& state, double lr,
               const AdamConfig& config = {}) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("Adam shape mismatch");
  }
  for (const auto& g : grads) {
    if (!std::isfinite(static_cast<double>(g))) throw TrainingError("non-finite gradient passed to Adam");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = static_cast<double>(grads[i]);
    const double m = config.beta1 * static_cast<double>(state.m[i]) + (1.0 - config.beta1) * g;
    const double v = config.beta2 * static_cast<double>(state.v[i]) + (1.0 - config.beta2) * g * g;
    state.m[i] = static_cast<Scalar>(m);
    state.v[i] = static_cast<Scalar>(v);
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    params[i] = static_cast<Scalar>(static_cast<double>(params[i]) - lr * m_hat / (std::sqrt(v_hat) + config.epsilon));
  }
}

}  // namespace malign::nn
