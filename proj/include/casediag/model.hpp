#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "casediag/ops.hpp"
#include "casediag/tensor.hpp"

namespace casediag {

struct UNetConfig {
  int levels = 3;
  int base_channels = 8;
  std::array<int, 3> patch_shape{16, 16, 8};
  bool norm_enabled = true;

  /// Bottleneck channel count; the latent code length n.
  int latent_dim() const { return base_channels << (levels - 1); }

  void validate() const {
    if (levels < 1) throw ConfigError("unet: levels must be >= 1, got " + std::to_string(levels));
    if (base_channels < 1)
      throw ConfigError("unet: base_channels must be >= 1, got " + std::to_string(base_channels));
    const int div = 1 << (levels - 1);
    const char* axis[3] = {"X", "Y", "Z"};
    for (int ax = 0; ax < 3; ++ax) {
      if (patch_shape[ax] < 1)
        throw ConfigError(std::string("unet: patch ") + axis[ax] + " extent must be positive");
      if (patch_shape[ax] % div != 0)
        throw ConfigError("unet: patch " + std::string(axis[ax]) + " extent " +
                          std::to_string(patch_shape[ax]) + " not divisible by 2^(levels-1) = " +
                          std::to_string(div));
    }
  }

  bool operator==(const UNetConfig&) const = default;
};

/// Encoder-only pass: latent code plus the per-level block activations.
template <typename Scalar>
struct EncoderForward {
  Tensor<Scalar> code;                       // [n]
  std::vector<Tensor<Scalar>> encoder_maps;  // block outputs, level 0 (shallow) .. levels-1 (deep)
};

/// One full forward pass through the U-Net. The latent code and the mask
/// logits come from the same pass and share the encoder activations, which
/// stay accessible per level for attention mapping.
template <typename Scalar>
struct UNetForward {
  Tensor<Scalar> code;                       // [n]
  Tensor<Scalar> mask_logits;                // [1,X,Y,Z]
  std::vector<Tensor<Scalar>> encoder_maps;  // block outputs, level 0 (shallow) .. levels-1 (deep)
};

/// U-Net with a contracting conv encoder (stride-2 downsampling between
/// levels), a nearest-neighbor-upsampling decoder with skip concatenation,
/// a 1-channel logit head, and a global-average-pooled bottleneck code.
/// Channel width at level i is base_channels * 2^i.
template <typename Scalar>
class UNetModel {
 public:
  UNetModel() = default;

  static UNetModel build(const UNetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    UNetModel m;
    m.cfg_ = cfg;
    std::mt19937_64 rng(seed);
    const int L = cfg.levels;
    const int b = cfg.base_channels;
    for (int i = 0; i < L; ++i) {
      const int ch = b << i;
      if (i > 0) m.down_.push_back(m.make_conv("enc" + std::to_string(i) + ".down", b << (i - 1), ch, 3, rng));
      const int in_ch = i == 0 ? 1 : ch;
      m.enc_a_.push_back(m.make_conv("enc" + std::to_string(i) + ".a", in_ch, ch, 3, rng));
      m.enc_b_.push_back(m.make_conv("enc" + std::to_string(i) + ".b", ch, ch, 3, rng));
    }
    for (int i = L - 2; i >= 0; --i) {
      const int ch = b << i;
      m.dec_up_.push_back(m.make_conv("dec" + std::to_string(i) + ".up", ch * 2, ch, 3, rng));
      m.dec_merge_.push_back(m.make_conv("dec" + std::to_string(i) + ".merge", ch * 2, ch, 3, rng));
    }
    m.head_ = m.make_conv("head", b, 1, 1, rng);
    return m;
  }

  const UNetConfig& config() const { return cfg_; }

  /// Named parameters in registration order. Handles share storage with the
  /// model; mutating values through them mutates the model.
  const std::vector<std::pair<std::string, Tensor<Scalar>>>& named_parameters() const {
    return params_;
  }

  EncoderForward<Scalar> forward_encoder(const Tensor<Scalar>& patch) const {
    check_patch(patch);
    EncoderForward<Scalar> out;
    Tensor<Scalar> x = patch;
    for (int i = 0; i < cfg_.levels; ++i) {
      if (i > 0) x = block(x, down_[i - 1], {2, 2, 2});
      x = block(x, enc_a_[i]);
      x = block(x, enc_b_[i]);
      out.encoder_maps.push_back(x);
    }
    out.code = global_avg_pool(x);
    return out;
  }

  UNetForward<Scalar> forward(const Tensor<Scalar>& patch) const {
    EncoderForward<Scalar> enc = forward_encoder(patch);
    const int L = cfg_.levels;
    UNetForward<Scalar> out;
    out.code = enc.code;
    out.encoder_maps = std::move(enc.encoder_maps);
    Tensor<Scalar> x = out.encoder_maps.back();
    for (int s = 0; s < L - 1; ++s) {
      const int level = L - 2 - s;
      x = upsample_nn(x, {2, 2, 2});
      x = block(x, dec_up_[s]);
      x = concat_channels(x, out.encoder_maps[level]);
      x = block(x, dec_merge_[s]);
    }
    out.mask_logits = add_channel_bias(conv3d(x, head_.w, {1, 1, 1}, {0, 0, 0}), head_.b);
    return out;
  }

 private:
  struct Conv {
    Tensor<Scalar> w, b;
  };

  Conv make_conv(const std::string& name, int in_ch, int out_ch, int k, std::mt19937_64& rng) {
    const std::int64_t fan_in = std::int64_t(in_ch) * k * k * k;
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / double(fan_in)));
    ArrayX<Scalar> w(std::int64_t(out_ch) * fan_in);
    for (auto& v : w) v = Scalar(dist(rng));
    Conv c;
    c.w = Tensor<Scalar>::from_values({out_ch, in_ch, k, k, k}, std::move(w), true);
    c.b = Tensor<Scalar>::zeros({out_ch}, true);
    params_.emplace_back(name + ".weight", c.w);
    params_.emplace_back(name + ".bias", c.b);
    return c;
  }

  Tensor<Scalar> block(const Tensor<Scalar>& x, const Conv& c, Triple stride = {1, 1, 1}) const {
    Tensor<Scalar> y = add_channel_bias(conv3d(x, c.w, stride, {1, 1, 1}), c.b);
    if (cfg_.norm_enabled) y = instance_norm(y);
    return relu(y);
  }

  void check_patch(const Tensor<Scalar>& patch) const {
    const Shape want{1, cfg_.patch_shape[0], cfg_.patch_shape[1], cfg_.patch_shape[2]};
    if (patch.shape() != want)
      throw DimensionError("unet: patch shape " + shape_str(patch.shape()) +
                           " does not match configured " + shape_str(want));
  }

  UNetConfig cfg_;
  std::vector<Conv> enc_a_, enc_b_, down_, dec_up_, dec_merge_;
  Conv head_;
  std::vector<std::pair<std::string, Tensor<Scalar>>> params_;
};

/// Learned elementwise alignment of latent codes (weight A, bias b).
/// Initialized to the identity transform.
template <typename Scalar>
struct AlignDistHead {
  Tensor<Scalar> A, b;

  static AlignDistHead identity(int n) {
    if (n < 1) throw ParameterError("align: latent dim must be >= 1");
    AlignDistHead h;
    h.A = Tensor<Scalar>::filled({n}, Scalar(1), true);
    h.b = Tensor<Scalar>::zeros({n}, true);
    return h;
  }

  int dim() const { return A.shape()[0]; }
};

/// d = ||(A.*c1 + b) - (A.*c2 + b)||_2, computed in the simplified form
/// ||A.*(c1 - c2)||_2 in which the bias cancels exactly.
template <typename Scalar>
Tensor<Scalar> align_dist(const AlignDistHead<Scalar>& head, const Tensor<Scalar>& c1,
                          const Tensor<Scalar>& c2) {
  detail::check_rank("align_dist", c1, 1, "first code");
  detail::check_rank("align_dist", c2, 1, "second code");
  if (c1.shape()[0] != head.dim() || c2.shape()[0] != head.dim())
    throw DimensionError("align_dist: code lengths " + std::to_string(c1.shape()[0]) + "/" +
                         std::to_string(c2.shape()[0]) + " do not match head length " +
                         std::to_string(head.dim()));
  return l2_distance(mul(head.A, sub(c1, c2)), Tensor<Scalar>::zeros({head.dim()}));
}

template <typename Scalar>
struct SiameseOutput {
  Tensor<Scalar> distance;  // scalar d
  UNetForward<Scalar> branch1, branch2;
};

/// Runs both patches through the single shared weight set and the AlignDist
/// head. Everything Eq.-2-shaped downstream (contrastive + segmentation)
/// hangs off this one graph.
template <typename Scalar>
SiameseOutput<Scalar> siamese_forward(const UNetModel<Scalar>& model,
                                      const AlignDistHead<Scalar>& head,
                                      const Tensor<Scalar>& patch1, const Tensor<Scalar>& patch2) {
  SiameseOutput<Scalar> out;
  out.branch1 = model.forward(patch1);
  out.branch2 = model.forward(patch2);
  out.distance = align_dist(head, out.branch1.code, out.branch2.code);
  return out;
}

/// Latent code of one patch (global average pool of the bottleneck). Skips
/// the decoder; the encoder op sequence is identical to a full forward, so
/// the code is bit-identical to forward(patch).code.
template <typename Scalar>
Tensor<Scalar> encode(const UNetModel<Scalar>& model, const Tensor<Scalar>& patch) {
  return model.forward_encoder(patch).code;
}

/// Mask logit volume for one patch.
template <typename Scalar>
Tensor<Scalar> forward_segment(const UNetModel<Scalar>& model, const Tensor<Scalar>& patch) {
  return model.forward(patch).mask_logits;
}

}  // namespace casediag
