#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tridec/batchnorm.hpp"
#include "tridec/conv.hpp"
#include "tridec/init.hpp"
#include "tridec/ops.hpp"

namespace tridec {

enum class NetVariant { shallow, deep };

/// Architecture description. Every encoder stage is conv 3x3 stride 1 with
/// zero padding, batch norm, relu, then max-pool stride 2; the decoder
/// mirrors it with stride-2 transposed convolutions. The final latent and
/// reconstruction layers are linear.
struct NetworkSpec {
  NetVariant variant = NetVariant::shallow;
  int in_c = 1, in_h = 28, in_w = 28;
  int latent_dim = 64;
  std::vector<int> channels = {32, 64, 128};
  bool batch_norm_latent = false;  // batch norm on the latent layer output

  static NetworkSpec shallow(int c, int h, int w, int latent = 64,
                             std::vector<int> widths = {32, 64, 128}) {
    NetworkSpec s;
    s.variant = NetVariant::shallow;
    s.in_c = c;
    s.in_h = h;
    s.in_w = w;
    s.latent_dim = latent;
    s.channels = std::move(widths);
    return s;
  }

  static NetworkSpec deep(int c, int h, int w, int latent = 10,
                          std::vector<int> widths = {32, 64, 128, 256, 256}) {
    NetworkSpec s = shallow(c, h, w, latent, std::move(widths));
    s.variant = NetVariant::deep;
    return s;
  }

  int stages() const { return static_cast<int>(channels.size()); }

  void validate() const {
    if (in_c < 1 || in_h < 1 || in_w < 1) throw InvalidDimension("network: bad input shape");
    if (latent_dim < 1) throw InvalidDimension("network: latent_dim must be >= 1");
    if (channels.empty()) throw InvalidDimension("network: no encoder stages");
    const int min_side = 1 << (stages() - 1);
    if (in_h < min_side || in_w < min_side) {
      throw InvalidGeometry("network: input " + std::to_string(in_h) + "x" +
                            std::to_string(in_w) + " too small for " +
                            std::to_string(stages()) + " pooling stages");
    }
  }
};

template <typename S>
struct Conv2dLayer {
  Tensor<S> kernel, bias;
};

template <typename S>
struct DenseLayer {
  Tensor<S> weight, bias;
};

template <typename S>
struct BatchNormLayer {
  Tensor<S> gamma, beta;
  BatchNormStats<S> stats;
};

namespace detail {

template <typename S>
BatchNormLayer<S> make_bn(int channels) {
  BatchNormLayer<S> bn;
  bn.gamma = Tensor<S>({channels}, S(1), true);
  bn.beta = Tensor<S>({channels}, S(0), true);
  bn.stats = BatchNormStats<S>(channels);
  return bn;
}

inline int pooled(int v) { return (v + 1) / 2; }  // ceil halving, zero pad on odd sizes

}  // namespace detail

/// Convolutional autoencoder with the shallow/deep layouts from NetworkSpec.
/// Encoder parameters come first in parameters(); the decoder set is
/// disjoint. All weights are Xavier-initialized from the seed, biases zero.
template <typename S>
class Autoencoder {
 public:
  Autoencoder(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    spec_.validate();
    Rng rng(seed);
    int h = spec_.in_h, w = spec_.in_w, ch = spec_.in_c;
    stage_sizes_.emplace_back(h, w);
    for (int i = 0; i < spec_.stages(); ++i) {
      const int out_ch = spec_.channels[static_cast<std::size_t>(i)];
      Conv2dLayer<S> conv;
      conv.kernel = xavier_init<S>({out_ch, ch, 3, 3}, rng);
      conv.bias = Tensor<S>({out_ch}, S(0), true);
      enc_convs_.push_back(std::move(conv));
      enc_bns_.push_back(detail::make_bn<S>(out_ch));
      ch = out_ch;
      h = detail::pooled(h);
      w = detail::pooled(w);
      stage_sizes_.emplace_back(h, w);
    }
    bottleneck_len_ = ch * h * w;
    enc_fc_.weight = xavier_init<S>({bottleneck_len_, spec_.latent_dim}, rng);
    enc_fc_.bias = Tensor<S>({spec_.latent_dim}, S(0), true);
    if (spec_.batch_norm_latent) latent_bn_ = detail::make_bn<S>(spec_.latent_dim);

    dec_fc_.weight = xavier_init<S>({spec_.latent_dim, bottleneck_len_}, rng);
    dec_fc_.bias = Tensor<S>({bottleneck_len_}, S(0), true);
    dec_fc_bn_ = detail::make_bn<S>(ch);
    for (int i = spec_.stages() - 1; i >= 0; --i) {
      const int in_ch = spec_.channels[static_cast<std::size_t>(i)];
      const int out_ch = i > 0 ? spec_.channels[static_cast<std::size_t>(i - 1)] : spec_.in_c;
      Conv2dLayer<S> tconv;
      tconv.kernel = xavier_init<S>({in_ch, out_ch, 3, 3}, rng);
      tconv.bias = Tensor<S>({out_ch}, S(0), true);
      dec_tconvs_.push_back(std::move(tconv));
      if (i > 0) dec_bns_.push_back(detail::make_bn<S>(out_ch));
      const auto [src_h, src_w] = stage_sizes_[static_cast<std::size_t>(i + 1)];
      const auto [dst_h, dst_w] = stage_sizes_[static_cast<std::size_t>(i)];
      out_pads_.emplace_back(dst_h - (2 * src_h - 1), dst_w - (2 * src_w - 1));
    }
  }

  const NetworkSpec& spec() const { return spec_; }
  int bottleneck_len() const { return bottleneck_len_; }

  /// [N x C x H x W] -> [N x latent_dim].
  Tensor<S> encode(const Tensor<S>& x, Mode mode) {
    if (x.rank() != 4 || x.dim(1) != spec_.in_c || x.dim(2) != spec_.in_h ||
        x.dim(3) != spec_.in_w) {
      throw ShapeError("encode: input " + shape_string(x.shape()) + " does not match spec " +
                       shape_string({-1, spec_.in_c, spec_.in_h, spec_.in_w}));
    }
    Tensor<S> t = x;
    for (std::size_t i = 0; i < enc_convs_.size(); ++i) {
      t = conv2d(t, enc_convs_[i].kernel, 1, 1);
      t = add_bias(t, enc_convs_[i].bias);
      t = batch_norm(t, enc_bns_[i].gamma, enc_bns_[i].beta, enc_bns_[i].stats, mode);
      t = relu(t);
      t = maxpool2d(t, 2, 2);
    }
    t = reshape(t, {t.dim(0), bottleneck_len_});
    t = add_bias(matmul(t, enc_fc_.weight), enc_fc_.bias);
    if (latent_bn_) {
      t = batch_norm(t, latent_bn_->gamma, latent_bn_->beta, latent_bn_->stats, mode);
    }
    return t;
  }

  /// [N x latent_dim] -> [N x C x H x W]. Final layer is linear.
  Tensor<S> decode(const Tensor<S>& z, Mode mode) {
    if (z.rank() != 2 || z.dim(1) != spec_.latent_dim) {
      throw ShapeError("decode: latent " + shape_string(z.shape()) + " does not match latent_dim " +
                       std::to_string(spec_.latent_dim));
    }
    const auto [bh, bw] = stage_sizes_.back();
    Tensor<S> t = add_bias(matmul(z, dec_fc_.weight), dec_fc_.bias);
    t = reshape(t, {z.dim(0), spec_.channels.back(), bh, bw});
    t = relu(batch_norm(t, dec_fc_bn_.gamma, dec_fc_bn_.beta, dec_fc_bn_.stats, mode));
    for (std::size_t i = 0; i < dec_tconvs_.size(); ++i) {
      t = transposed_conv2d(t, dec_tconvs_[i].kernel, 2, 1, out_pads_[i].first,
                            out_pads_[i].second);
      t = add_bias(t, dec_tconvs_[i].bias);
      if (i + 1 < dec_tconvs_.size()) {
        t = relu(batch_norm(t, dec_bns_[i].gamma, dec_bns_[i].beta, dec_bns_[i].stats, mode));
      }
    }
    return t;
  }

  /// Trainable parameters in fixed (checkpoint) order, encoder first.
  std::vector<std::pair<std::string, Tensor<S>*>> parameters() {
    std::vector<std::pair<std::string, Tensor<S>*>> out;
    for (std::size_t i = 0; i < enc_convs_.size(); ++i) {
      const std::string p = "enc" + std::to_string(i);
      out.emplace_back(p + ".kernel", &enc_convs_[i].kernel);
      out.emplace_back(p + ".bias", &enc_convs_[i].bias);
      out.emplace_back(p + ".bn.gamma", &enc_bns_[i].gamma);
      out.emplace_back(p + ".bn.beta", &enc_bns_[i].beta);
    }
    out.emplace_back("enc.fc.weight", &enc_fc_.weight);
    out.emplace_back("enc.fc.bias", &enc_fc_.bias);
    if (latent_bn_) {
      out.emplace_back("enc.latent_bn.gamma", &latent_bn_->gamma);
      out.emplace_back("enc.latent_bn.beta", &latent_bn_->beta);
    }
    out.emplace_back("dec.fc.weight", &dec_fc_.weight);
    out.emplace_back("dec.fc.bias", &dec_fc_.bias);
    out.emplace_back("dec.fc.bn.gamma", &dec_fc_bn_.gamma);
    out.emplace_back("dec.fc.bn.beta", &dec_fc_bn_.beta);
    for (std::size_t i = 0; i < dec_tconvs_.size(); ++i) {
      const std::string p = "dec" + std::to_string(i);
      out.emplace_back(p + ".kernel", &dec_tconvs_[i].kernel);
      out.emplace_back(p + ".bias", &dec_tconvs_[i].bias);
      if (i < dec_bns_.size()) {
        out.emplace_back(p + ".bn.gamma", &dec_bns_[i].gamma);
        out.emplace_back(p + ".bn.beta", &dec_bns_[i].beta);
      }
    }
    return out;
  }

  /// Encoder-only parameters (phi); the rest of parameters() is theta.
  std::size_t encoder_param_count() const {
    return enc_convs_.size() * 4 + 2 + (latent_bn_ ? 2 : 0);
  }

  /// Batch-norm running statistics in fixed order, for checkpoints.
  std::vector<std::pair<std::string, std::vector<S>*>> running_stats() {
    std::vector<std::pair<std::string, std::vector<S>*>> out;
    for (std::size_t i = 0; i < enc_bns_.size(); ++i) {
      const std::string p = "enc" + std::to_string(i) + ".bn";
      out.emplace_back(p + ".running_mean", &enc_bns_[i].stats.running_mean);
      out.emplace_back(p + ".running_var", &enc_bns_[i].stats.running_var);
    }
    if (latent_bn_) {
      out.emplace_back("enc.latent_bn.running_mean", &latent_bn_->stats.running_mean);
      out.emplace_back("enc.latent_bn.running_var", &latent_bn_->stats.running_var);
    }
    out.emplace_back("dec.fc.bn.running_mean", &dec_fc_bn_.stats.running_mean);
    out.emplace_back("dec.fc.bn.running_var", &dec_fc_bn_.stats.running_var);
    for (std::size_t i = 0; i < dec_bns_.size(); ++i) {
      const std::string p = "dec" + std::to_string(i) + ".bn";
      out.emplace_back(p + ".running_mean", &dec_bns_[i].stats.running_mean);
      out.emplace_back(p + ".running_var", &dec_bns_[i].stats.running_var);
    }
    return out;
  }

 private:
  NetworkSpec spec_;
  int bottleneck_len_ = 0;
  std::vector<Conv2dLayer<S>> enc_convs_;
  std::vector<BatchNormLayer<S>> enc_bns_;
  DenseLayer<S> enc_fc_;
  std::optional<BatchNormLayer<S>> latent_bn_;
  DenseLayer<S> dec_fc_;
  BatchNormLayer<S> dec_fc_bn_;
  std::vector<Conv2dLayer<S>> dec_tconvs_;
  std::vector<BatchNormLayer<S>> dec_bns_;
  std::vector<std::pair<int, int>> stage_sizes_;
  std::vector<std::pair<int, int>> out_pads_;
};

/// Mean per-sample squared reconstruction error over the batch.
template <typename S>
Tensor<S> reconstruction_loss(const Tensor<S>& x, const Tensor<S>& reconstructed) {
  detail::check_same_shape("reconstruction_loss", x, reconstructed);
  const S inv_n = S(1) / static_cast<S>(x.dim(0));
  return scalar_mul(sum(square(sub(reconstructed, x))), inv_n);
}

}  // namespace tridec
