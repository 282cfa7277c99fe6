#pragma once

#include <algorithm>
#include <vector>

#include "tridec/ops.hpp"

namespace tridec {

namespace detail {

// Column buffer layout: (C*KH*KW) x (OH*OW), one sample at a time.
template <typename S>
void im2col(const S* x, int c, int h, int w, int kh, int kw, int stride, int pad, int oh, int ow,
            S* col) {
  const int l = oh * ow;
  for (int ch = 0; ch < c; ++ch) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        S* row = col + static_cast<std::size_t>((ch * kh + ki) * kw + kj) * l;
        for (int oi = 0; oi < oh; ++oi) {
          const int ii = oi * stride - pad + ki;
          if (ii < 0 || ii >= h) {
            std::fill(row + oi * ow, row + (oi + 1) * ow, S(0));
            continue;
          }
          const S* src = x + (static_cast<std::size_t>(ch) * h + ii) * w;
          for (int oj = 0; oj < ow; ++oj) {
            const int jj = oj * stride - pad + kj;
            row[oi * ow + oj] = (jj >= 0 && jj < w) ? src[jj] : S(0);
          }
        }
      }
    }
  }
}

// Scatters a column buffer back, accumulating into x.
template <typename S>
void col2im(const S* col, int c, int h, int w, int kh, int kw, int stride, int pad, int oh,
            int ow, S* x) {
  const int l = oh * ow;
  for (int ch = 0; ch < c; ++ch) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const S* row = col + static_cast<std::size_t>((ch * kh + ki) * kw + kj) * l;
        for (int oi = 0; oi < oh; ++oi) {
          const int ii = oi * stride - pad + ki;
          if (ii < 0 || ii >= h) continue;
          S* dst = x + (static_cast<std::size_t>(ch) * h + ii) * w;
          for (int oj = 0; oj < ow; ++oj) {
            const int jj = oj * stride - pad + kj;
            if (jj >= 0 && jj < w) dst[jj] += row[oi * ow + oj];
          }
        }
      }
    }
  }
}

struct ConvDims {
  int n, c, h, w;        // input
  int oc, kh, kw;        // kernel
  int stride, pad;
  int oh, ow;            // output
  std::size_t in_stride() const { return static_cast<std::size_t>(c) * h * w; }
  std::size_t out_stride() const { return static_cast<std::size_t>(oc) * oh * ow; }
  int ckk() const { return c * kh * kw; }
  int l() const { return oh * ow; }
};

template <typename S>
void conv_fwd(const S* x, const S* w, const ConvDims& d, S* out, S beta = S(0)) {
  std::vector<S> col(static_cast<std::size_t>(d.ckk()) * d.l());
  for (int n = 0; n < d.n; ++n) {
    im2col(x + n * d.in_stride(), d.c, d.h, d.w, d.kh, d.kw, d.stride, d.pad, d.oh, d.ow,
           col.data());
    gemm(false, false, d.oc, d.l(), d.ckk(), S(1), w, d.ckk(), col.data(), d.l(), beta,
         out + n * d.out_stride(), d.l());
  }
}

template <typename S>
void conv_bwd_data(const S* dy, const S* w, const ConvDims& d, S* dx) {
  std::vector<S> col(static_cast<std::size_t>(d.ckk()) * d.l());
  for (int n = 0; n < d.n; ++n) {
    gemm(true, false, d.ckk(), d.l(), d.oc, S(1), w, d.ckk(), dy + n * d.out_stride(), d.l(),
         S(0), col.data(), d.l());
    col2im(col.data(), d.c, d.h, d.w, d.kh, d.kw, d.stride, d.pad, d.oh, d.ow,
           dx + n * d.in_stride());
  }
}

template <typename S>
void conv_bwd_weights(const S* x, const S* dy, const ConvDims& d, S* dw) {
  std::vector<S> col(static_cast<std::size_t>(d.ckk()) * d.l());
  for (int n = 0; n < d.n; ++n) {
    im2col(x + n * d.in_stride(), d.c, d.h, d.w, d.kh, d.kw, d.stride, d.pad, d.oh, d.ow,
           col.data());
    gemm(false, true, d.oc, d.ckk(), d.l(), S(1), dy + n * d.out_stride(), d.l(), col.data(),
         d.l(), S(1), dw, d.ckk());
  }
}

}  // namespace detail

/// 2-D convolution, NCHW input [N x C x H x W], kernel [OC x C x KH x KW].
/// Zero padding; stride 1 with pad KH/2 preserves spatial size.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& kernel, int stride, int zero_pad) {
  if (stride < 1) throw InvalidDimension("conv2d: stride must be >= 1");
  if (zero_pad < 0) throw InvalidDimension("conv2d: negative padding");
  if (x.rank() != 4 || kernel.rank() != 4 || x.dim(1) != kernel.dim(1)) {
    throw ShapeError("conv2d: shapes " + shape_string(x.shape()) + " vs kernel " +
                     shape_string(kernel.shape()));
  }
  detail::ConvDims d;
  d.n = x.dim(0);
  d.c = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.oc = kernel.dim(0);
  d.kh = kernel.dim(2);
  d.kw = kernel.dim(3);
  d.stride = stride;
  d.pad = zero_pad;
  d.oh = (d.h + 2 * zero_pad - d.kh) / stride + 1;
  d.ow = (d.w + 2 * zero_pad - d.kw) / stride + 1;
  if (d.h + 2 * zero_pad < d.kh || d.w + 2 * zero_pad < d.kw) {
    throw ShapeError("conv2d: kernel " + shape_string(kernel.shape()) +
                     " larger than padded input " + shape_string(x.shape()));
  }
  std::vector<S> out(static_cast<std::size_t>(d.n) * d.out_stride());
  detail::conv_fwd(x.values().data(), kernel.values().data(), d, out.data());
  Tensor<S> y({d.n, d.oc, d.oh, d.ow}, std::move(out));
  detail::check_finite_values(y, "conv2d");
  if (auto* tape = Tape<S>::active(); tape && (tape->tracks(x) || tape->tracks(kernel))) {
    tape->record(y, {tape->input_node(x), tape->input_node(kernel)},
                 [x, kernel, d](std::span<const S> g, typename Tape<S>::GradSink& sink) {
                   if (auto gx = sink.accum(0); !gx.empty()) {
                     detail::conv_bwd_data(g.data(), kernel.values().data(), d, gx.data());
                   }
                   if (auto gw = sink.accum(1); !gw.empty()) {
                     detail::conv_bwd_weights(x.values().data(), g.data(), d, gw.data());
                   }
                 });
  }
  return y;
}

/// Transposed 2-D convolution, input [N x Cin x H x W], kernel
/// [Cin x Cout x KH x KW]. Output spatial size is
/// (H-1)*stride - 2*pad + KH + out_pad; out_pad in [0, stride) selects among
/// the sizes a strided conv would have collapsed together. out_pad_w
/// defaults to out_pad_h.
template <typename S>
Tensor<S> transposed_conv2d(const Tensor<S>& x, const Tensor<S>& kernel, int stride, int zero_pad,
                            int out_pad_h = 0, int out_pad_w = -1) {
  if (out_pad_w < 0) out_pad_w = out_pad_h;
  if (stride < 1) throw InvalidDimension("transposed_conv2d: stride must be >= 1");
  if (out_pad_h < 0 || out_pad_h >= stride || out_pad_w >= stride) {
    throw InvalidDimension("transposed_conv2d: out_pad must be in [0, stride)");
  }
  if (x.rank() != 4 || kernel.rank() != 4 || x.dim(1) != kernel.dim(0)) {
    throw ShapeError("transposed_conv2d: shapes " + shape_string(x.shape()) + " vs kernel " +
                     shape_string(kernel.shape()));
  }
  // The op is the data-transpose of a forward convolution whose input space
  // is this op's output space.
  detail::ConvDims d;
  d.n = x.dim(0);
  d.oc = x.dim(1);                 // conv output channels = Cin
  d.c = kernel.dim(1);             // conv input channels = Cout
  d.kh = kernel.dim(2);
  d.kw = kernel.dim(3);
  d.stride = stride;
  d.pad = zero_pad;
  d.oh = x.dim(2);                 // conv output spatial = this input spatial
  d.ow = x.dim(3);
  d.h = (x.dim(2) - 1) * stride - 2 * zero_pad + d.kh + out_pad_h;
  d.w = (x.dim(3) - 1) * stride - 2 * zero_pad + d.kw + out_pad_w;
  if (d.h < 1 || d.w < 1) {
    throw ShapeError("transposed_conv2d: non-positive output size for input " +
                     shape_string(x.shape()));
  }
  std::vector<S> out(static_cast<std::size_t>(d.n) * d.in_stride(), S(0));
  detail::conv_bwd_data(x.values().data(), kernel.values().data(), d, out.data());
  Tensor<S> y({d.n, d.c, d.h, d.w}, std::move(out));
  detail::check_finite_values(y, "transposed_conv2d");
  if (auto* tape = Tape<S>::active(); tape && (tape->tracks(x) || tape->tracks(kernel))) {
    tape->record(y, {tape->input_node(x), tape->input_node(kernel)},
                 [x, kernel, d](std::span<const S> g, typename Tape<S>::GradSink& sink) {
                   if (auto gx = sink.accum(0); !gx.empty()) {
                     detail::conv_fwd(g.data(), kernel.values().data(), d, gx.data(), S(1));
                   }
                   if (auto gw = sink.accum(1); !gw.empty()) {
                     detail::conv_bwd_weights(g.data(), x.values().data(), d, gw.data());
                   }
                 });
  }
  return y;
}

/// Max pooling over [N x C x H x W] with square window and stride. Windows
/// are clipped at the borders (ceil-mode output size), so padding never wins
/// the max. Gradient routes to the first maximal element of each window.
template <typename S>
Tensor<S> maxpool2d(const Tensor<S>& x, int window, int stride) {
  if (stride < 1 || window < 1) throw InvalidDimension("maxpool2d: window/stride must be >= 1");
  if (x.rank() != 4) throw ShapeError("maxpool2d: expected NCHW, got " + shape_string(x.shape()));
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = (std::max(0, h - window) + stride - 1) / stride + 1;
  const int ow = (std::max(0, w - window) + stride - 1) / stride + 1;
  auto xv = x.values();
  std::vector<S> out(static_cast<std::size_t>(n) * c * oh * ow);
  auto argmax = std::make_shared<std::vector<int>>(out.size());
  std::size_t o = 0;
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const S* plane = xv.data() + (static_cast<std::size_t>(ni) * c + ci) * h * w;
      const int base = (ni * c + ci) * h * w;
      for (int oi = 0; oi < oh; ++oi) {
        const int i0 = oi * stride, i1 = std::min(i0 + window, h);
        for (int oj = 0; oj < ow; ++oj) {
          const int j0 = oj * stride, j1 = std::min(j0 + window, w);
          S best = plane[i0 * w + j0];
          int best_at = i0 * w + j0;
          for (int i = i0; i < i1; ++i)
            for (int j = j0; j < j1; ++j) {
              if (plane[i * w + j] > best) {
                best = plane[i * w + j];
                best_at = i * w + j;
              }
            }
          out[o] = best;
          (*argmax)[o] = base + best_at;
          ++o;
        }
      }
    }
  }
  Tensor<S> y({n, c, oh, ow}, std::move(out));
  if (auto* tape = Tape<S>::active(); tape && tape->tracks(x)) {
    tape->record(y, {tape->input_node(x)},
                 [argmax](std::span<const S> g, typename Tape<S>::GradSink& sink) {
                   auto gx = sink.accum(0);
                   if (gx.empty()) return;
                   for (std::size_t i = 0; i < g.size(); ++i)
                     gx[static_cast<std::size_t>((*argmax)[i])] += g[i];
                 });
  }
  return y;
}

}  // namespace tridec
