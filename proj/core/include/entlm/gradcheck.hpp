#pragma once

#include <functional>
#include <vector>

#include "entlm/tensor.hpp"

namespace entlm {

using ScalarFunction = std::function<Tensor()>;

// Compares reverse-mode gradients of f with respect to each input against
// central differences with step h. f is re-evaluated after perturbing the
// inputs in place and must read them on every call.
//
// Returns max over all components of |analytic - numeric| / max(1, |analytic|).
double grad_check(const ScalarFunction& f, std::vector<Tensor> inputs, double h = 1e-5);

// Single-input convenience form.
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double h = 1e-5);

}  // namespace entlm
