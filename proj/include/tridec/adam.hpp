#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tridec/tensor.hpp"

namespace tridec {

/// First/second moment buffers for one parameter.
template <typename S>
struct AdamSlot {
  std::vector<S> m, v;
};

/// Standard Adam update with bias correction for a single parameter.
/// `step` is the already-incremented shared step counter.
template <typename S>
void adam_update(std::vector<S>& param, std::span<const S> grad, AdamSlot<S>& slot,
                 std::int64_t step, S lr, S beta1, S beta2, S eps, const std::string& name) {
  if (param.size() != grad.size()) {
    throw ShapeError("adam_update: parameter '" + name + "' has " +
                     std::to_string(param.size()) + " values but gradient has " +
                     std::to_string(grad.size()));
  }
  if (slot.m.empty()) {
    slot.m.assign(param.size(), S(0));
    slot.v.assign(param.size(), S(0));
  }
  const S bc1 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta1), static_cast<double>(step)));
  const S bc2 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta2), static_cast<double>(step)));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const S g = grad[i];
    if (!std::isfinite(static_cast<double>(g))) {
      throw NonFiniteGradient("adam_update: non-finite gradient for parameter '" + name + "'");
    }
    slot.m[i] = beta1 * slot.m[i] + (S(1) - beta1) * g;
    slot.v[i] = beta2 * slot.v[i] + (S(1) - beta2) * g * g;
    const S m_hat = slot.m[i] / bc1;
    const S v_hat = slot.v[i] / bc2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

/// Adam over a fixed set of named parameters; one shared step counter.
template <typename S>
class Adam {
 public:
  explicit Adam(S beta1 = S(0.9), S beta2 = S(0.999), S eps = S(1e-8))
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void add_param(std::string name, Tensor<S>* p) {
    names_.push_back(std::move(name));
    params_.push_back(p);
    slots_.emplace_back();
  }

  std::size_t param_count() const { return params_.size(); }
  std::int64_t step_count() const { return step_; }

  /// One optimizer step using the gradients accumulated on `tape`.
  void step(const Tape<S>& tape, S lr) {
    ++step_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const std::vector<S> grad = tape.grad_of(*params_[i]);
      adam_update(params_[i]->mutable_values(), std::span<const S>(grad), slots_[i], step_, lr,
                  beta1_, beta2_, eps_, names_[i]);
    }
  }

  // Checkpoint access.
  const std::vector<std::string>& names() const { return names_; }
  AdamSlot<S>& slot(std::size_t i) { return slots_[i]; }
  const AdamSlot<S>& slot(std::size_t i) const { return slots_[i]; }
  void set_step_count(std::int64_t t) { step_ = t; }

 private:
  S beta1_, beta2_, eps_;
  std::int64_t step_ = 0;
  std::vector<std::string> names_;
  std::vector<Tensor<S>*> params_;
  std::vector<AdamSlot<S>> slots_;
};

}  // namespace tridec
