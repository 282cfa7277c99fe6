#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "tridec/tensor.hpp"

namespace tridec {

struct GradCheckOptions {
  double h = 1e-3;           // central-difference step
  double inject_bug = 0.0;   // perturbs one analytic gradient; negative control hook
};

/// Compares the tape gradient of a deterministic scalar function against
/// central finite differences over every coordinate of `params`. Returns the
/// maximum over coordinates of |g_a - g_fd| / max(|g_a|, |g_fd|, 1e-12).
///
/// The function is evaluated without an active tape during the difference
/// sweep, so anything it treats as a constant (e.g. a frozen target
/// distribution) must be captured outside of it.
template <typename S, typename LossFn>
double finite_difference_check(LossFn&& loss_fn, std::span<Tensor<S>* const> params,
                               GradCheckOptions opt = {}) {
  auto eval = [&]() -> double {
    const Tensor<S> loss = loss_fn();
    const double v = static_cast<double>(loss.item());
    if (!std::isfinite(v)) throw NonFiniteValue("finite_difference_check: loss is not finite");
    return v;
  };

  std::vector<std::vector<S>> analytic;
  {
    Tape<S> tape;
    typename Tape<S>::Scope scope(tape);
    const Tensor<S> loss = loss_fn();
    if (!std::isfinite(static_cast<double>(loss.item()))) {
      throw NonFiniteValue("finite_difference_check: loss is not finite");
    }
    tape.backward(loss, params);
    for (const Tensor<S>* p : params) analytic.push_back(tape.grad_of(*p));
  }
  if (opt.inject_bug != 0.0 && !analytic.empty() && !analytic.front().empty()) {
    analytic.front().front() += static_cast<S>(opt.inject_bug) * analytic.front().front() +
                                static_cast<S>(opt.inject_bug);
  }

  const double h = opt.h;
  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    std::vector<S>& vals = params[pi]->mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const S original = vals[i];
      vals[i] = original + static_cast<S>(h);
      const double up = eval();
      vals[i] = original - static_cast<S>(h);
      const double down = eval();
      vals[i] = original;
      const double g_fd = (up - down) / (2.0 * h);
      const double g_an = static_cast<double>(analytic[pi][i]);
      const double denom = std::max({std::fabs(g_an), std::fabs(g_fd), 1e-12});
      max_rel = std::max(max_rel, std::fabs(g_an - g_fd) / denom);
    }
  }
  return max_rel;
}

}  // namespace tridec
