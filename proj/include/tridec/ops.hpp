#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "tridec/gemm.hpp"
#include "tridec/tensor.hpp"

namespace tridec {

/// Batch-statistics vs running-statistics behavior for batch_norm; also
/// selects whether encoder passes are training passes.
enum class Mode { train, eval };

/// Floor used inside logs and divisions.
inline constexpr double kEps = 1e-12;

namespace detail {

template <typename S>
inline void check_same_shape(const char* op, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

template <typename S>
inline void check_finite_values(const Tensor<S>& t, const char* op) {
#if TRIDEC_CHECK_FINITE_OPS
  for (S v : t.values()) {
    if (!std::isfinite(static_cast<double>(v))) {
      throw NonFiniteValue(std::string(op) + ": produced a non-finite value");
    }
  }
#else
  (void)t;
  (void)op;
#endif
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape("add", a, b);
  std::vector<S> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  Tensor<S> y(a.shape(), std::move(out));
  if (auto* tape = Tape<S>::active(); tape && (tape->tracks(a) || tape->tracks(b))) {
    tape->record(y, {tape->input_node(a), tape->input_node(b)},
                 [](std::span<const S> g, typename Tape<S>::GradSink& sink) {
                   if (auto ga = sink.accum(0); !ga.empty())
                     for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                   if (auto gb = sink.accum(1); !gb.empty())
                     for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                 });
  }
  return y;
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape("sub", a, b);
  std::vector<S> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  Tensor<S> y(a.shape(), std::move(out));
  if (auto* tape = Tape<S>::active(); tape && (tape->tracks(a) || tape->tracks(b))) {
    tape->record(y, {tape->input_node(a), tape->input_node(b)},
                 [](std::span<const S> g, typename Tape<S>::GradSink& sink) {
                   if (auto ga = sink.accum(0); !ga.empty())
                     for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                   if (auto gb = sink.accum(1); !gb.empty())
                     for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                 });
  }
  return y;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape("mul", a, b);
  std::vector<S> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  Tensor<S> y(a.shape(), std::move(out));
  if (auto* tape = Tape<S>::active(); tape && (tape->tracks(a) || tape->tracks(b))) {
    tape->record(y, {tape->input_node(a), tape->input_node(b)},
                 [a, b](std::span<const S> g, typename Tape<S>::GradSink& sink) {
                   auto av = a.values(), bv = b.values();
                   if (auto ga = sink.accum(0); !ga.empty())
                     for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                   if (auto gb = sink.accum(1); !gb.empty())
                     for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                 });
  }
  return y;
}

template <typename S>
Tensor<S> square(const Tensor<S>& x) {
  std::vector<S> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * xv[i];
  Tensor<S> y(x.shape(), std::move(out));
  if (auto* tape = Tape<S>::active(); tape && tape->tracks(x)) {
    tape->record(y, {tape->input_node(x)},
                 [x](std::span<const S> g, typename Tape<S>::GradSink& sink) {
                   auto gx = sink.accum(0);
                   if (gx.empty()) return;
                   auto xv = x.values();
                   for (std::size_t i = 0; i < g.size(); ++i) gx[i] += S(2) * g[i] * xv[i];
                 });
  }
  return y;
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  std::vector<S> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > S(0) ? xv[i] : S(0);
  Tensor<S> y(x.shape(), std::move(out));
  if (auto* tape = Tape<S>::active(); tape && tape->tracks(x)) {
    tape->record(y, {tape->input_node(x)},
                 [x](std::span<const S> g, typename Tape<S>::GradSink& sink) {
                   auto gx = sink.accum(0);
                   if (gx.empty()) return;
                   auto xv = x.values();
                   for (std::size_t i = 0; i < g.size(); ++i)
                     if (xv[i] > S(0)) gx[i] += g[i];
                 });
  }
  return y;
}

template <typename S>
Tensor<S> scalar_add(const Tensor<S>& x, S c) {
  std::vector<S> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + c;
  Tensor<S> y(x.shape(), std::move(out));
  if (auto* tape = Tape<S>::active(); tape && tape->tracks(x)) {
    tape->record(y, {tape->input_node(x)},
                 [](std::span<const S> g, typename Tape<S>::GradSink& sink) {
                   if (auto gx = sink.accum(0); !gx.empty())
                     for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                 });
  }
  return y;
}

template <typename S>
Tensor<S> scalar_mul(const Tensor<S>& x, S c) {
  std::vector<S> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * c;
  Tensor<S> y(x.shape(), std::move(out));
  if (auto* tape = Tape<S>::active(); tape && tape->tracks(x)) {
    tape->record(y, {tape->input_node(x)},
                 [c](std::span<const S> g, typename Tape<S>::GradSink& sink) {
                   if (auto gx = sink.accum(0); !gx.empty())
                     for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
                 });
  }
  return y;
}

/// Elementwise natural log with the argument floored at kEps. Floored
/// entries get zero gradient.
template <typename S>
Tensor<S> log(const Tensor<S>& x) {
  const S eps = static_cast<S>(kEps);
  std::vector<S> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(xv[i], eps));
  Tensor<S> y(x.shape(), std::move(out));
  detail::check_finite_values(y, "log");
  if (auto* tape = Tape<S>::active(); tape && tape->tracks(x)) {
    tape->record(y, {tape->input_node(x)},
                 [x, eps](std::span<const S> g, typename Tape<S>::GradSink& sink) {
                   auto gx = sink.accum(0);
                   if (gx.empty()) return;
                   auto xv = x.values();
                   for (std::size_t i = 0; i < g.size(); ++i)
                     if (xv[i] > eps) gx[i] += g[i] / xv[i];
                 });
  }
  return y;
}

/// Elementwise 1/x with the argument floored at kEps (inputs are >= 1 in the
/// soft-assignment path). Floored entries get zero gradient.
template <typename S>
Tensor<S> reciprocal(const Tensor<S>& x) {
  const S eps = static_cast<S>(kEps);
  std::vector<S> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = S(1) / std::max(xv[i], eps);
  Tensor<S> y(x.shape(), std::move(out));
  detail::check_finite_values(y, "reciprocal");
  if (auto* tape = Tape<S>::active(); tape && tape->tracks(x)) {
    tape->record(y, {tape->input_node(x)},
                 [x, y, eps](std::span<const S> g, typename Tape<S>::GradSink& sink) {
                   auto gx = sink.accum(0);
                   if (gx.empty()) return;
                   auto xv = x.values();
                   auto yv = y.values();
                   for (std::size_t i = 0; i < g.size(); ++i)
                     if (xv[i] > eps) gx[i] -= g[i] * yv[i] * yv[i];
                 });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  S acc = S(0);
  for (S v : x.values()) acc += v;
  Tensor<S> y = Tensor<S>::scalar(acc);
  if (auto* tape = Tape<S>::active(); tape && tape->tracks(x)) {
    tape->record(y, {tape->input_node(x)},
                 [](std::span<const S> g, typename Tape<S>::GradSink& sink) {
                   if (auto gx = sink.accum(0); !gx.empty())
                     for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
                 });
  }
  return y;
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
  S acc = S(0);
  for (S v : x.values()) acc += v;
  const S inv_n = S(1) / static_cast<S>(x.size());
  Tensor<S> y = Tensor<S>::scalar(acc * inv_n);
  if (auto* tape = Tape<S>::active(); tape && tape->tracks(x)) {
    tape->record(y, {tape->input_node(x)},
                 [inv_n](std::span<const S> g, typename Tape<S>::GradSink& sink) {
                   if (auto gx = sink.accum(0); !gx.empty())
                     for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0] * inv_n;
                 });
  }
  return y;
}

/// Row sums of a matrix: [M x N] -> [M x 1].
template <typename S>
Tensor<S> row_sum(const Tensor<S>& x) {
  if (x.rank() != 2) throw ShapeError("row_sum: expected a matrix, got " + shape_string(x.shape()));
  const int m = x.dim(0), n = x.dim(1);
  std::vector<S> out(static_cast<std::size_t>(m), S(0));
  auto xv = x.values();
  for (int i = 0; i < m; ++i) {
    S acc = S(0);
    for (int j = 0; j < n; ++j) acc += xv[static_cast<std::size_t>(i) * n + j];
    out[static_cast<std::size_t>(i)] = acc;
  }
  Tensor<S> y({m, 1}, std::move(out));
  if (auto* tape = Tape<S>::active(); tape && tape->tracks(x)) {
    tape->record(y, {tape->input_node(x)},
                 [m, n](std::span<const S> g, typename Tape<S>::GradSink& sink) {
                   auto gx = sink.accum(0);
                   if (gx.empty()) return;
                   for (int i = 0; i < m; ++i)
                     for (int j = 0; j < n; ++j) gx[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(i)];
                 });
  }
  return y;
}

/// Column means of a matrix: [M x N] -> [1 x N].
template <typename S>
Tensor<S> col_mean(const Tensor<S>& x) {
  if (x.rank() != 2) throw ShapeError("col_mean: expected a matrix, got " + shape_string(x.shape()));
  const int m = x.dim(0), n = x.dim(1);
  std::vector<S> out(static_cast<std::size_t>(n), S(0));
  auto xv = x.values();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j)] += xv[static_cast<std::size_t>(i) * n + j];
  const S inv_m = S(1) / static_cast<S>(m);
  for (S& v : out) v *= inv_m;
  Tensor<S> y({1, n}, std::move(out));
  if (auto* tape = Tape<S>::active(); tape && tape->tracks(x)) {
    tape->record(y, {tape->input_node(x)},
                 [m, n, inv_m](std::span<const S> g, typename Tape<S>::GradSink& sink) {
                   auto gx = sink.accum(0);
                   if (gx.empty()) return;
                   for (int i = 0; i < m; ++i)
                     for (int j = 0; j < n; ++j) gx[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(j)] * inv_m;
                 });
  }
  return y;
}

/// Divides each row of a [M x N] matrix by the matching entry of a [M x 1]
/// column vector. Denominators are floored at kEps.
template <typename S>
Tensor<S> div_rowwise(const Tensor<S>& a, const Tensor<S>& r) {
  if (a.rank() != 2 || r.rank() != 2 || r.dim(1) != 1 || a.dim(0) != r.dim(0)) {
    throw ShapeError("div_rowwise: shapes " + shape_string(a.shape()) + " vs " +
                     shape_string(r.shape()));
  }
  const S eps = static_cast<S>(kEps);
  const int m = a.dim(0), n = a.dim(1);
  std::vector<S> out(a.size());
  auto av = a.values(), rv = r.values();
  for (int i = 0; i < m; ++i) {
    const S d = S(1) / std::max(rv[static_cast<std::size_t>(i)], eps);
    for (int j = 0; j < n; ++j) {
      out[static_cast<std::size_t>(i) * n + j] = av[static_cast<std::size_t>(i) * n + j] * d;
    }
  }
  Tensor<S> y(a.shape(), std::move(out));
  detail::check_finite_values(y, "div_rowwise");
  if (auto* tape = Tape<S>::active(); tape && (tape->tracks(a) || tape->tracks(r))) {
    tape->record(y, {tape->input_node(a), tape->input_node(r)},
                 [a, r, m, n, eps](std::span<const S> g, typename Tape<S>::GradSink& sink) {
                   auto av = a.values(), rv = r.values();
                   auto ga = sink.accum(0);
                   auto gr = sink.accum(1);
                   for (int i = 0; i < m; ++i) {
                     const S d = std::max(rv[static_cast<std::size_t>(i)], eps);
                     const S inv = S(1) / d;
                     for (int j = 0; j < n; ++j) {
                       const std::size_t k = static_cast<std::size_t>(i) * n + j;
                       if (!ga.empty()) ga[k] += g[k] * inv;
                       if (!gr.empty()) gr[static_cast<std::size_t>(i)] -= g[k] * av[k] * inv * inv;
                     }
                   }
                 });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Matrix / shape ops
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: shapes " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<S> out(static_cast<std::size_t>(m) * n);
  detail::gemm(false, false, m, n, k, S(1), a.values().data(), k, b.values().data(), n, S(0),
               out.data(), n);
  Tensor<S> y({m, n}, std::move(out));
  detail::check_finite_values(y, "matmul");
  if (auto* tape = Tape<S>::active(); tape && (tape->tracks(a) || tape->tracks(b))) {
    tape->record(y, {tape->input_node(a), tape->input_node(b)},
                 [a, b, m, k, n](std::span<const S> g, typename Tape<S>::GradSink& sink) {
                   if (auto ga = sink.accum(0); !ga.empty()) {
                     // dA = g . B^T
                     detail::gemm(false, true, m, k, n, S(1), g.data(), n, b.values().data(), n,
                                  S(1), ga.data(), k);
                   }
                   if (auto gb = sink.accum(1); !gb.empty()) {
                     // dB = A^T . g
                     detail::gemm(true, false, k, n, m, S(1), a.values().data(), k, g.data(), n,
                                  S(1), gb.data(), n);
                   }
                 });
  }
  return y;
}

/// Adds a bias vector along the feature axis: [B x F] + [F], or along the
/// channel axis: [N x C x H x W] + [C].
template <typename S>
Tensor<S> add_bias(const Tensor<S>& x, const Tensor<S>& b) {
  std::vector<S> out(x.values().begin(), x.values().end());
  auto bv = b.values();
  std::size_t channels = 0, inner = 0;
  if (x.rank() == 2 && b.rank() == 1 && b.dim(0) == x.dim(1)) {
    channels = static_cast<std::size_t>(x.dim(1));
    inner = 1;
  } else if (x.rank() == 4 && b.rank() == 1 && b.dim(0) == x.dim(1)) {
    channels = static_cast<std::size_t>(x.dim(1));
    inner = static_cast<std::size_t>(x.dim(2)) * static_cast<std::size_t>(x.dim(3));
  } else {
    throw ShapeError("add_bias: shapes " + shape_string(x.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  const std::size_t outer = x.size() / (channels * inner);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t c = 0; c < channels; ++c) {
      S* p = out.data() + (o * channels + c) * inner;
      const S bias = bv[c];
      for (std::size_t i = 0; i < inner; ++i) p[i] += bias;
    }
  Tensor<S> y(x.shape(), std::move(out));
  if (auto* tape = Tape<S>::active(); tape && (tape->tracks(x) || tape->tracks(b))) {
    tape->record(y, {tape->input_node(x), tape->input_node(b)},
                 [channels, inner, outer](std::span<const S> g, typename Tape<S>::GradSink& sink) {
                   if (auto gx = sink.accum(0); !gx.empty())
                     for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                   if (auto gb = sink.accum(1); !gb.empty()) {
                     for (std::size_t o = 0; o < outer; ++o)
                       for (std::size_t c = 0; c < channels; ++c) {
                         const S* p = g.data() + (o * channels + c) * inner;
                         S acc = S(0);
                         for (std::size_t i = 0; i < inner; ++i) acc += p[i];
                         gb[c] += acc;
                       }
                   }
                 });
  }
  return y;
}

/// Copies into a new shape with identical element count.
template <typename S>
Tensor<S> reshape(const Tensor<S>& x, std::vector<int> shape) {
  std::vector<S> out(x.values().begin(), x.values().end());
  Tensor<S> y(std::move(shape), std::move(out));
  if (y.size() != x.size()) {
    throw ShapeError("reshape: " + shape_string(x.shape()) + " -> " + shape_string(y.shape()));
  }
  if (auto* tape = Tape<S>::active(); tape && tape->tracks(x)) {
    tape->record(y, {tape->input_node(x)},
                 [](std::span<const S> g, typename Tape<S>::GradSink& sink) {
                   if (auto gx = sink.accum(0); !gx.empty())
                     for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                 });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Distances
// ---------------------------------------------------------------------------

/// Per-row squared Euclidean distance between two [M x d] matrices -> [M x 1].
template <typename S>
Tensor<S> l2_sq_distance(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape("l2_sq_distance", a, b);
  if (a.rank() != 2) {
    throw ShapeError("l2_sq_distance: expected matrices, got " + shape_string(a.shape()));
  }
  const int m = a.dim(0), d = a.dim(1);
  std::vector<S> out(static_cast<std::size_t>(m), S(0));
  auto av = a.values(), bv = b.values();
  for (int i = 0; i < m; ++i) {
    S acc = S(0);
    for (int j = 0; j < d; ++j) {
      const S diff = av[static_cast<std::size_t>(i) * d + j] - bv[static_cast<std::size_t>(i) * d + j];
      acc += diff * diff;
    }
    out[static_cast<std::size_t>(i)] = acc;
  }
  Tensor<S> y({m, 1}, std::move(out));
  if (auto* tape = Tape<S>::active(); tape && (tape->tracks(a) || tape->tracks(b))) {
    tape->record(y, {tape->input_node(a), tape->input_node(b)},
                 [a, b, m, d](std::span<const S> g, typename Tape<S>::GradSink& sink) {
                   auto av = a.values(), bv = b.values();
                   auto ga = sink.accum(0);
                   auto gb = sink.accum(1);
                   for (int i = 0; i < m; ++i) {
                     const S gi = S(2) * g[static_cast<std::size_t>(i)];
                     for (int j = 0; j < d; ++j) {
                       const std::size_t k = static_cast<std::size_t>(i) * d + j;
                       const S diff = av[k] - bv[k];
                       if (!ga.empty()) ga[k] += gi * diff;
                       if (!gb.empty()) gb[k] -= gi * diff;
                     }
                   }
                 });
  }
  return y;
}

/// Squared Euclidean distances between every row of Z [B x d] and every row
/// of M [K x d] -> [B x K].
template <typename S>
Tensor<S> pairwise_sq_dist(const Tensor<S>& z, const Tensor<S>& centers) {
  if (z.rank() != 2 || centers.rank() != 2 || z.dim(1) != centers.dim(1)) {
    throw ShapeError("pairwise_sq_dist: shapes " + shape_string(z.shape()) + " vs " +
                     shape_string(centers.shape()));
  }
  const int bsz = z.dim(0), k = centers.dim(0), d = z.dim(1);
  std::vector<S> out(static_cast<std::size_t>(bsz) * k);
  auto zv = z.values(), mv = centers.values();
  for (int i = 0; i < bsz; ++i) {
    const S* zi = zv.data() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < k; ++j) {
      const S* mj = mv.data() + static_cast<std::size_t>(j) * d;
      S acc = S(0);
      for (int t = 0; t < d; ++t) {
        const S diff = zi[t] - mj[t];
        acc += diff * diff;
      }
      out[static_cast<std::size_t>(i) * k + j] = acc;
    }
  }
  Tensor<S> y({bsz, k}, std::move(out));
  if (auto* tape = Tape<S>::active(); tape && (tape->tracks(z) || tape->tracks(centers))) {
    tape->record(y, {tape->input_node(z), tape->input_node(centers)},
                 [z, centers, bsz, k, d](std::span<const S> g, typename Tape<S>::GradSink& sink) {
                   auto zv = z.values(), mv = centers.values();
                   auto gz = sink.accum(0);
                   auto gm = sink.accum(1);
                   for (int i = 0; i < bsz; ++i) {
                     const S* zi = zv.data() + static_cast<std::size_t>(i) * d;
                     for (int j = 0; j < k; ++j) {
                       const S gij = S(2) * g[static_cast<std::size_t>(i) * k + j];
                       if (gij == S(0)) continue;
                       const S* mj = mv.data() + static_cast<std::size_t>(j) * d;
                       for (int t = 0; t < d; ++t) {
                         const S diff = zi[t] - mj[t];
                         if (!gz.empty()) gz[static_cast<std::size_t>(i) * d + t] += gij * diff;
                         if (!gm.empty()) gm[static_cast<std::size_t>(j) * d + t] -= gij * diff;
                       }
                     }
                   }
                 });
  }
  return y;
}

}  // namespace tridec
