#pragma once

#include <cmath>
#include <vector>

#include "tridec/rng.hpp"
#include "tridec/tensor.hpp"

namespace tridec {

/// Fan sizes deduced from the weight shape: [in x out] for dense weights,
/// [d0 x d1 x kh x kw] for convolution kernels (receptive field included).
inline std::pair<double, double> fan_in_out(const std::vector<int>& shape) {
  if (shape.size() == 2) {
    return {static_cast<double>(shape[0]), static_cast<double>(shape[1])};
  }
  if (shape.size() == 4) {
    const double field = static_cast<double>(shape[2]) * shape[3];
    return {shape[1] * field, shape[0] * field};
  }
  if (shape.size() == 1) {
    return {static_cast<double>(shape[0]), static_cast<double>(shape[0])};
  }
  throw ShapeError("xavier_init: unsupported weight shape " + shape_string(shape));
}

/// Uniform Xavier initialization: samples from [-b, b] with
/// b = sqrt(6 / (fan_in + fan_out)). Deterministic given the rng state.
template <typename S>
Tensor<S> xavier_init(std::vector<int> shape, Rng& rng, bool requires_grad = true) {
  const auto [fan_in, fan_out] = fan_in_out(shape);
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  const std::size_t n = checked_size(shape);
  std::vector<S> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    values[i] = static_cast<S>(rng.uniform(-bound, bound));
  }
  return Tensor<S>(std::move(shape), std::move(values), requires_grad);
}

}  // namespace tridec
