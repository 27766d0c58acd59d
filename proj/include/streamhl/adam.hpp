#pragma once

// Adam with bias correction over a fixed ordered parameter list. The moment
// state lives outside the tensors so it can be checkpointed as named blocks.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "streamhl/tensor.hpp"

namespace streamhl {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("AdamConfig: lr must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0))
      throw std::invalid_argument("AdamConfig: beta1 must be in [0,1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0))
      throw std::invalid_argument("AdamConfig: beta2 must be in [0,1)");
    if (!(epsilon > 0.0))
      throw std::invalid_argument("AdamConfig: epsilon must be > 0");
  }
};

struct AdamState {
  std::uint64_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

inline AdamState init_adam_state(const std::vector<Tensor>& params) {
  AdamState state;
  state.m.reserve(params.size());
  state.v.reserve(params.size());
  for (const auto& p : params) {
    state.m.emplace_back(p.size(), 0.0);
    state.v.emplace_back(p.size(), 0.0);
  }
  return state;
}

// One update step. A parameter with no allocated gradient is treated as
// having zero gradient (its moments still decay, as Adam prescribes).
inline void adam_step(std::vector<Tensor>& params, AdamState& state,
                      const AdamConfig& cfg) {
  cfg.validate();
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw std::invalid_argument(
        "adam_step: state tracks " + std::to_string(state.m.size()) +
        " parameters, got " + std::to_string(params.size()));
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& param = params[p];
    auto& m = state.m[p];
    auto& v = state.v[p];
    if (m.size() != param.size() || v.size() != param.size())
      throw std::invalid_argument("adam_step: parameter " + std::to_string(p) +
                                  " shape does not match optimizer state");
    auto& data = param.mutable_data();
    const bool has_grad = param.has_grad();
    const std::vector<double>* grad = has_grad ? &param.grad() : nullptr;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = has_grad ? (*grad)[i] : 0.0;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      data[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

}  // namespace streamhl
