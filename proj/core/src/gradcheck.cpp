#include "entlm/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "entlm/errors.hpp"

namespace entlm {
namespace {

double evaluate(const ScalarFunction& f) {
  Tensor y = f();
  if (y.numel() != 1) throw ContractError("grad_check: function is not scalar-valued, got " + shape_string(y.shape()));
  return y.item();
}

}  // namespace

double grad_check(const ScalarFunction& f, std::vector<Tensor> inputs, double h) {
  if (!(h > 0.0) || h > 1e-3) throw ContractError("grad_check: step must lie in (0, 1e-3]");

  std::vector<bool> saved_flags;
  for (Tensor& x : inputs) {
    saved_flags.push_back(x.requires_grad());
    x.set_requires_grad(true);
    x.zero_grad();
  }

  {
    Tape tape;
    TapeScope scope(tape);
    Tensor y = f();
    if (y.numel() != 1) {
      throw ContractError("grad_check: function is not scalar-valued, got " + shape_string(y.shape()));
    }
    tape.backward(y);
  }

  double worst = 0.0;
  for (Tensor& x : inputs) {
    std::vector<double> analytic(x.numel(), 0.0);
    if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
    auto values = x.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + h;
      const double up = evaluate(f);
      values[i] = original - h;
      const double down = evaluate(f);
      values[i] = original;
      const double numeric = (up - down) / (2.0 * h);
      const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
      worst = std::max(worst, err);
    }
  }

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    inputs[i].zero_grad();
    inputs[i].set_requires_grad(saved_flags[i]);
  }
  return worst;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double h) {
  return grad_check([&] { return f(x); }, std::vector<Tensor>{x}, h);
}

}  // namespace entlm
