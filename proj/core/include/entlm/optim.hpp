#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "entlm/tensor.hpp"

namespace entlm {

struct AdamHyperParams {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moments for one parameter plus the shared step counter.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
};

// One bias-corrected Adam update of param in place. state.m/v are sized on
// first use; afterwards every length must agree.
void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state,
               const AdamHyperParams& hp);

// Adam over a fixed list of parameter tensors.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor> params, AdamHyperParams hp);

  // Applies one update from the current gradients. Parameters that received
  // no gradient are updated with a zero gradient, so the moments still decay.
  void step();
  void zero_grad();

  std::uint64_t steps() const noexcept { return step_; }
  const AdamHyperParams& hyper_params() const noexcept { return hp_; }
  std::span<const AdamState> states() const noexcept { return states_; }
  // For checkpoint restore.
  void restore(std::vector<AdamState> states, std::uint64_t steps);

 private:
  std::vector<Tensor> params_;
  std::vector<AdamState> states_;
  AdamHyperParams hp_;
  std::uint64_t step_ = 0;
};

}  // namespace entlm
