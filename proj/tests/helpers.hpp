#pragma once

#include <vector>

#include "tridec/rng.hpp"
#include "tridec/tensor.hpp"

namespace testutil {

template <typename S>
tridec::Tensor<S> rand_tensor(std::vector<int> shape, tridec::Rng& rng, double lo, double hi,
                              bool requires_grad = true) {
  const std::size_t n = tridec::checked_size(shape);
  std::vector<S> v(n);
  for (auto& x : v) x = static_cast<S>(rng.uniform(lo, hi));
  return tridec::Tensor<S>(std::move(shape), std::move(v), requires_grad);
}

template <typename S>
std::vector<S> to_vec(std::span<const S> s) {
  return std::vector<S>(s.begin(), s.end());
}

}  // namespace testutil
