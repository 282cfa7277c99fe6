#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "tridec/ops.hpp"

namespace tridec {

/// Running statistics for eval-mode batch norm, EMA with momentum 0.9.
template <typename S>
struct BatchNormStats {
  explicit BatchNormStats(int channels = 0)
      : running_mean(static_cast<std::size_t>(channels), S(0)),
        running_var(static_cast<std::size_t>(channels), S(1)) {}

  std::vector<S> running_mean;
  std::vector<S> running_var;
  S momentum = S(0.9);
};

/// Batch normalization over [B x F] (per feature) or [N x C x H x W]
/// (per channel). Train mode normalizes with biased batch statistics and
/// updates the running EMA; eval mode normalizes with the running values.
template <typename S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     BatchNormStats<S>& stats, Mode mode, S eps = S(1e-5)) {
  int channels = 0;
  std::size_t outer = 0, inner = 0;
  if (x.rank() == 2) {
    channels = x.dim(1);
    outer = static_cast<std::size_t>(x.dim(0));
    inner = 1;
  } else if (x.rank() == 4) {
    channels = x.dim(1);
    outer = static_cast<std::size_t>(x.dim(0));
    inner = static_cast<std::size_t>(x.dim(2)) * static_cast<std::size_t>(x.dim(3));
  } else {
    throw ShapeError("batch_norm: expected rank 2 or 4, got " + shape_string(x.shape()));
  }
  if (gamma.rank() != 1 || gamma.dim(0) != channels || beta.rank() != 1 ||
      beta.dim(0) != channels) {
    throw ShapeError("batch_norm: scale/shift " + shape_string(gamma.shape()) + "/" +
                     shape_string(beta.shape()) + " do not match " +
                     std::to_string(channels) + " channels");
  }
  if (stats.running_mean.size() != static_cast<std::size_t>(channels)) {
    throw ShapeError("batch_norm: running statistics sized for " +
                     std::to_string(stats.running_mean.size()) + " channels, input has " +
                     std::to_string(channels));
  }

  const std::size_t c_sz = static_cast<std::size_t>(channels);
  const std::size_t n_per_channel = outer * inner;
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();

  std::vector<S> mean_c(c_sz), inv_sigma(c_sz);
  if (mode == Mode::train) {
    std::vector<S> var_c(c_sz, S(0));
    for (std::size_t c = 0; c < c_sz; ++c) {
      S acc = S(0);
      for (std::size_t o = 0; o < outer; ++o) {
        const S* p = xv.data() + (o * c_sz + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) acc += p[i];
      }
      mean_c[c] = acc / static_cast<S>(n_per_channel);
      S vacc = S(0);
      for (std::size_t o = 0; o < outer; ++o) {
        const S* p = xv.data() + (o * c_sz + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) {
          const S diff = p[i] - mean_c[c];
          vacc += diff * diff;
        }
      }
      var_c[c] = vacc / static_cast<S>(n_per_channel);
      inv_sigma[c] = S(1) / std::sqrt(var_c[c] + eps);
      stats.running_mean[c] = stats.momentum * stats.running_mean[c] + (S(1) - stats.momentum) * mean_c[c];
      stats.running_var[c] = stats.momentum * stats.running_var[c] + (S(1) - stats.momentum) * var_c[c];
    }
  } else {
    for (std::size_t c = 0; c < c_sz; ++c) {
      mean_c[c] = stats.running_mean[c];
      inv_sigma[c] = S(1) / std::sqrt(stats.running_var[c] + eps);
    }
  }

  auto xhat = std::make_shared<std::vector<S>>(x.size());
  std::vector<S> out(x.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t c = 0; c < c_sz; ++c) {
      const S* p = xv.data() + (o * c_sz + c) * inner;
      S* ph = xhat->data() + (o * c_sz + c) * inner;
      S* po = out.data() + (o * c_sz + c) * inner;
      const S m = mean_c[c], is = inv_sigma[c], gm = gv[c], bt = bv[c];
      for (std::size_t i = 0; i < inner; ++i) {
        ph[i] = (p[i] - m) * is;
        po[i] = gm * ph[i] + bt;
      }
    }
  }
  Tensor<S> y(x.shape(), std::move(out));
  detail::check_finite_values(y, "batch_norm");

  auto* tape = Tape<S>::active();
  if (!tape || !(tape->tracks(x) || tape->tracks(gamma) || tape->tracks(beta))) return y;

  const bool batch_stats = mode == Mode::train;
  auto sigmas = std::make_shared<std::vector<S>>(std::move(inv_sigma));
  tape->record(
      y, {tape->input_node(x), tape->input_node(gamma), tape->input_node(beta)},
      [gamma, xhat, sigmas, c_sz, outer, inner, n_per_channel,
       batch_stats](std::span<const S> g, typename Tape<S>::GradSink& sink) {
        auto gv = gamma.values();
        auto gx = sink.accum(0);
        auto gg = sink.accum(1);
        auto gb = sink.accum(2);
        for (std::size_t c = 0; c < c_sz; ++c) {
          S sum_g = S(0), sum_gx = S(0);
          for (std::size_t o = 0; o < outer; ++o) {
            const std::size_t base = (o * c_sz + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
              sum_g += g[base + i];
              sum_gx += g[base + i] * (*xhat)[base + i];
            }
          }
          if (!gg.empty()) gg[c] += sum_gx;
          if (!gb.empty()) gb[c] += sum_g;
          if (gx.empty()) continue;
          const S scale = gv[c] * (*sigmas)[c];
          if (batch_stats) {
            const S mean_g = sum_g / static_cast<S>(n_per_channel);
            const S mean_gx = sum_gx / static_cast<S>(n_per_channel);
            for (std::size_t o = 0; o < outer; ++o) {
              const std::size_t base = (o * c_sz + c) * inner;
              for (std::size_t i = 0; i < inner; ++i) {
                gx[base + i] += scale * (g[base + i] - mean_g - (*xhat)[base + i] * mean_gx);
              }
            }
          } else {
            for (std::size_t o = 0; o < outer; ++o) {
              const std::size_t base = (o * c_sz + c) * inner;
              for (std::size_t i = 0; i < inner; ++i) gx[base + i] += scale * g[base + i];
            }
          }
        }
      });
  return y;
}

}  // namespace tridec
