#include "entlm/optim.hpp"

#include <cmath>
#include <string>

#include "entlm/errors.hpp"

namespace entlm {

void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state,
               const AdamHyperParams& hp) {
  if (grad.size() != param.size()) {
    throw DimensionError("adam_step: gradient length " + std::to_string(grad.size()) +
                         " differs from parameter length " + std::to_string(param.size()));
  }
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(param.size(), 0.0);
    state.v.assign(param.size(), 0.0);
  }
  if (state.m.size() != param.size() || state.v.size() != param.size()) {
    throw DimensionError("adam_step: optimizer state length " + std::to_string(state.m.size()) +
                         " differs from parameter length " + std::to_string(param.size()));
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(hp.beta1, t);
  const double c2 = 1.0 - std::pow(hp.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
    state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    param[i] -= hp.lr * m_hat / (std::sqrt(v_hat) + hp.eps);
  }
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, AdamHyperParams hp)
    : params_(std::move(params)), states_(params_.size()), hp_(hp) {
  if (!(hp_.lr > 0.0)) throw ConfigError("learning rate must be positive");
}

void AdamOptimizer::step() {
  std::vector<double> zeros;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (p.has_grad()) {
      adam_step(p.data(), p.grad(), states_[i], hp_);
    } else {
      zeros.assign(p.numel(), 0.0);
      adam_step(p.data(), zeros, states_[i], hp_);
    }
  }
  ++step_;
}

void AdamOptimizer::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

void AdamOptimizer::restore(std::vector<AdamState> states, std::uint64_t steps) {
  if (states.size() != params_.size()) {
    throw DimensionError("optimizer restore: " + std::to_string(states.size()) + " states for " +
                         std::to_string(params_.size()) + " parameters");
  }
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (states[i].m.size() != params_[i].numel() || states[i].v.size() != params_[i].numel()) {
      throw DimensionError("optimizer restore: state " + std::to_string(i) + " has wrong length");
    }
  }
  states_ = std::move(states);
  step_ = steps;
}

}  // namespace entlm
