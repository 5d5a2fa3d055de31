#pragma once

// Central finite-difference oracle, independent of the tape.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "hoi/tensor.hpp"

namespace hoi::testing {

/// d eval / d values[i] by central differences, perturbing `values` in place.
inline std::vector<double> fd_gradient(const std::function<double()>& eval, std::span<double> values,
                                       double h = 1e-5) {
  std::vector<double> g(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double keep = values[i];
    values[i] = keep + h;
    const double up = eval();
    values[i] = keep - h;
    const double down = eval();
    values[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Norm-wise relative error ||a - b|| / max(||a||, ||b||); 0 when both vanish.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  if (denom < 1e-10) return std::sqrt(diff);
  return std::sqrt(diff) / denom;
}

using TensorFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Largest relative error between tape gradients and central differences over
/// all inputs of a scalar function.
inline double gradcheck(const TensorFn& f, std::vector<Tensor> inputs, double h = 1e-5) {
  Tape tape;
  std::vector<Tensor> watched;
  for (const auto& x : inputs) watched.push_back(tape.watch(x));
  const Tensor loss = f(watched);
  const Gradients grads = tape.backward(loss);

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto analytic = grads.of(watched[k]).to_vector();
    std::vector<double> values = inputs[k].to_vector();
    auto eval = [&]() {
      std::vector<Tensor> probe = inputs;
      probe[k] = Tensor(inputs[k].shape(), values);
      return f(probe).item();
    };
    const auto numeric = fd_gradient(eval, values, h);
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return worst;
}

}  // namespace hoi::testing
