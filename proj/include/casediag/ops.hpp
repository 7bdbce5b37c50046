#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "casediag/tensor.hpp"

namespace casediag {

using Triple = std::array<int, 3>;

namespace detail {

constexpr const char* kAxisName[3] = {"X", "Y", "Z"};

template <typename Scalar>
void check_same_shape(const char* op, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

template <typename Scalar>
void check_rank(const char* op, const Tensor<Scalar>& t, std::size_t rank, const char* what) {
  if (t.shape().size() != rank)
    throw DimensionError(std::string(op) + ": " + what + " must have rank " +
                         std::to_string(rank) + ", got shape " + shape_str(t.shape()));
}

// Valid output range [lo,hi] along one axis for a given kernel offset:
// in = out*stride + k - pad must land in [0, in_extent).
inline std::pair<int, int> conv_axis_range(int in_extent, int out_extent, int stride, int pad,
                                           int k) {
  const int a = pad - k;
  int lo = a <= 0 ? 0 : (a + stride - 1) / stride;
  const int b = in_extent - 1 + pad - k;
  if (b < 0) return {1, 0};  // empty
  int hi = std::min(b / stride, out_extent - 1);
  return {lo, hi};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::check_same_shape("add", a, b);
  auto an = a.node(), bn = b.node();
  return detail::make_op<Scalar>(
      "add", a.shape(), a.values() + b.values(), {an, bn}, [an, bn](TensorNode<Scalar>& self) {
        if (an->needs_grad) an->grad += self.grad;
        if (bn->needs_grad) bn->grad += self.grad;
      });
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::check_same_shape("sub", a, b);
  auto an = a.node(), bn = b.node();
  return detail::make_op<Scalar>(
      "sub", a.shape(), a.values() - b.values(), {an, bn}, [an, bn](TensorNode<Scalar>& self) {
        if (an->needs_grad) an->grad += self.grad;
        if (bn->needs_grad) bn->grad -= self.grad;
      });
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::check_same_shape("mul", a, b);
  auto an = a.node(), bn = b.node();
  return detail::make_op<Scalar>(
      "mul", a.shape(), a.values() * b.values(), {an, bn}, [an, bn](TensorNode<Scalar>& self) {
        if (an->needs_grad) an->grad += self.grad * bn->values;
        if (bn->needs_grad) bn->grad += self.grad * an->values;
      });
}

template <typename Scalar>
Tensor<Scalar> div(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::check_same_shape("div", a, b);
  auto an = a.node(), bn = b.node();
  return detail::make_op<Scalar>(
      "div", a.shape(), a.values() / b.values(), {an, bn}, [an, bn](TensorNode<Scalar>& self) {
        if (an->needs_grad) an->grad += self.grad / bn->values;
        if (bn->needs_grad)
          bn->grad -= self.grad * an->values / (bn->values * bn->values);
      });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& x, Scalar c) {
  auto xn = x.node();
  return detail::make_op<Scalar>("scale", x.shape(), x.values() * c, {xn},
                                 [xn, c](TensorNode<Scalar>& self) {
                                   if (xn->needs_grad) xn->grad += self.grad * c;
                                 });
}

template <typename Scalar>
Tensor<Scalar> add_scalar(const Tensor<Scalar>& x, Scalar c) {
  auto xn = x.node();
  return detail::make_op<Scalar>("add_scalar", x.shape(), x.values() + c, {xn},
                                 [xn](TensorNode<Scalar>& self) {
                                   if (xn->needs_grad) xn->grad += self.grad;
                                 });
}

/// relu'(0) is defined as 0 (strict > comparison in the backward pass).
template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  auto xn = x.node();
  return detail::make_op<Scalar>(
      "relu", x.shape(), x.values().max(Scalar(0)), {xn}, [xn](TensorNode<Scalar>& self) {
        if (xn->needs_grad)
          xn->grad += self.grad * (xn->values > Scalar(0)).template cast<Scalar>();
      });
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x) {
  const auto& v = x.values();
  ArrayX<Scalar> pos = Scalar(1) / (Scalar(1) + (-v).exp());
  ArrayX<Scalar> ex = v.exp();
  ArrayX<Scalar> neg = ex / (Scalar(1) + ex);
  auto xn = x.node();
  return detail::make_op<Scalar>(
      "sigmoid", x.shape(), (v >= Scalar(0)).select(pos, neg), {xn},
      [xn](TensorNode<Scalar>& self) {
        if (xn->needs_grad)
          xn->grad += self.grad * self.values * (Scalar(1) - self.values);
      });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x) {
  auto xn = x.node();
  return detail::make_op<Scalar>("sum", {1}, ArrayX<Scalar>::Constant(1, x.values().sum()), {xn},
                                 [xn](TensorNode<Scalar>& self) {
                                   if (xn->needs_grad) xn->grad += self.grad[0];
                                 });
}

/// [C,X,Y,Z] -> [C]: per-channel spatial mean.
template <typename Scalar>
Tensor<Scalar> global_avg_pool(const Tensor<Scalar>& x) {
  detail::check_rank("global_avg_pool", x, 4, "input");
  const int C = x.shape()[0];
  const std::int64_t vol = x.numel() / C;
  ArrayX<Scalar> out(C);
  for (int c = 0; c < C; ++c) out[c] = x.values().segment(c * vol, vol).mean();
  auto xn = x.node();
  return detail::make_op<Scalar>("global_avg_pool", {C}, std::move(out), {xn},
                                 [xn, C, vol](TensorNode<Scalar>& self) {
                                   if (!xn->needs_grad) return;
                                   for (int c = 0; c < C; ++c)
                                     xn->grad.segment(c * vol, vol) += self.grad[c] / Scalar(vol);
                                 });
}

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::check_rank("concat_channels", a, 4, "first input");
  detail::check_rank("concat_channels", b, 4, "second input");
  for (int ax = 1; ax < 4; ++ax)
    if (a.shape()[ax] != b.shape()[ax])
      throw DimensionError(std::string("concat_channels: spatial axis ") +
                           detail::kAxisName[ax - 1] + " mismatch: " +
                           std::to_string(a.shape()[ax]) + " vs " + std::to_string(b.shape()[ax]));
  Shape out_shape = a.shape();
  out_shape[0] += b.shape()[0];
  ArrayX<Scalar> out(a.numel() + b.numel());
  out << a.values(), b.values();  // channels are contiguous blocks
  auto an = a.node(), bn = b.node();
  const std::int64_t na = a.numel(), nb = b.numel();
  return detail::make_op<Scalar>("concat_channels", std::move(out_shape), std::move(out), {an, bn},
                                 [an, bn, na, nb](TensorNode<Scalar>& self) {
                                   if (an->needs_grad) an->grad += self.grad.head(na);
                                   if (bn->needs_grad) bn->grad += self.grad.tail(nb);
                                 });
}

/// Nearest-neighbor upsampling by integer factors per spatial axis.
template <typename Scalar>
Tensor<Scalar> upsample_nn(const Tensor<Scalar>& x, Triple factor) {
  detail::check_rank("upsample_nn", x, 4, "input");
  for (int ax = 0; ax < 3; ++ax)
    if (factor[ax] < 1)
      throw ParameterError(std::string("upsample_nn: factor along ") + detail::kAxisName[ax] +
                           " must be >= 1, got " + std::to_string(factor[ax]));
  const int C = x.shape()[0], X = x.shape()[1], Y = x.shape()[2], Z = x.shape()[3];
  const int OX = X * factor[0], OY = Y * factor[1], OZ = Z * factor[2];
  ArrayX<Scalar> out(std::int64_t(C) * OX * OY * OZ);
  const auto& in = x.values();
  for (int c = 0; c < C; ++c)
    for (int zo = 0; zo < OZ; ++zo)
      for (int yo = 0; yo < OY; ++yo) {
        const std::int64_t ibase = idx4(c, 0, yo / factor[1], zo / factor[2], X, Y, Z);
        const std::int64_t obase = idx4(c, 0, yo, zo, OX, OY, OZ);
        for (int xo = 0; xo < OX; ++xo) out[obase + xo] = in[ibase + xo / factor[0]];
      }
  auto xn = x.node();
  return detail::make_op<Scalar>(
      "upsample_nn", {C, OX, OY, OZ}, std::move(out), {xn},
      [xn, C, X, Y, Z, OX, OY, OZ, factor](TensorNode<Scalar>& self) {
        if (!xn->needs_grad) return;
        for (int c = 0; c < C; ++c)
          for (int zo = 0; zo < OZ; ++zo)
            for (int yo = 0; yo < OY; ++yo) {
              const std::int64_t ibase = idx4(c, 0, yo / factor[1], zo / factor[2], X, Y, Z);
              const std::int64_t obase = idx4(c, 0, yo, zo, OX, OY, OZ);
              for (int xo = 0; xo < OX; ++xo)
                xn->grad[ibase + xo / factor[0]] += self.grad[obase + xo];
            }
      });
}

// ---------------------------------------------------------------------------
// 3D convolution (cross-correlation)
// ---------------------------------------------------------------------------

namespace detail {

struct Conv3dDims {
  int Ci, X, Y, Z;      // input
  int Co, KX, KY, KZ;   // kernel
  int OX, OY, OZ;       // output
  Triple stride, pad;
};

template <typename Scalar>
Conv3dDims conv3d_dims(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel, Triple stride,
                       Triple pad) {
  check_rank("conv3d", input, 4, "input");
  check_rank("conv3d", kernel, 5, "kernel");
  Conv3dDims d;
  d.Ci = input.shape()[0];
  d.X = input.shape()[1];
  d.Y = input.shape()[2];
  d.Z = input.shape()[3];
  d.Co = kernel.shape()[0];
  if (kernel.shape()[1] != d.Ci)
    throw DimensionError("conv3d: channel mismatch: kernel expects " +
                         std::to_string(kernel.shape()[1]) + " input channels, input has " +
                         std::to_string(d.Ci));
  d.KX = kernel.shape()[2];
  d.KY = kernel.shape()[3];
  d.KZ = kernel.shape()[4];
  d.stride = stride;
  d.pad = pad;
  const int in_ext[3] = {d.X, d.Y, d.Z};
  const int k_ext[3] = {d.KX, d.KY, d.KZ};
  int out_ext[3];
  for (int ax = 0; ax < 3; ++ax) {
    if (stride[ax] < 1)
      throw ParameterError(std::string("conv3d: stride along ") + kAxisName[ax] +
                           " must be >= 1, got " + std::to_string(stride[ax]));
    if (pad[ax] < 0)
      throw ParameterError(std::string("conv3d: padding along ") + kAxisName[ax] +
                           " must be >= 0, got " + std::to_string(pad[ax]));
    const int padded = in_ext[ax] + 2 * pad[ax];
    if (k_ext[ax] > padded)
      throw DimensionError(std::string("conv3d: kernel ") + kAxisName[ax] + " extent " +
                           std::to_string(k_ext[ax]) + " exceeds padded input " + kAxisName[ax] +
                           " extent " + std::to_string(padded));
    out_ext[ax] = (padded - k_ext[ax]) / stride[ax] + 1;
  }
  d.OX = out_ext[0];
  d.OY = out_ext[1];
  d.OZ = out_ext[2];
  return d;
}

// conv3d runs as an im2col + GEMM: the patch matrix P is (R x N) with
// R = Ci*KX*KY*KZ rows matching the kernel's per-co layout and N = OX*OY*OZ
// output voxels, so forward is W(Co x R) * P, the kernel gradient is
// dO * P^T, and the input gradient is col2im(W^T * dO).

template <typename Scalar>
using MatRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using MatCM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;

inline std::int64_t conv_rows(const Conv3dDims& d) {
  return std::int64_t(d.Ci) * d.KX * d.KY * d.KZ;
}

inline std::int64_t conv_cols(const Conv3dDims& d) {
  return std::int64_t(d.OX) * d.OY * d.OZ;
}

template <typename Scalar>
std::vector<Scalar>& conv_scratch() {
  thread_local std::vector<Scalar> buf;
  return buf;
}

template <typename Scalar>
void im2col(const Scalar* in, const Conv3dDims& d, Scalar* P) {
  const int sx = d.stride[0], sy = d.stride[1], sz = d.stride[2];
  const int px = d.pad[0], py = d.pad[1], pz = d.pad[2];
  for (int zo = 0; zo < d.OZ; ++zo)
    for (int yo = 0; yo < d.OY; ++yo)
      for (int xo = 0; xo < d.OX; ++xo)
        for (int ci = 0; ci < d.Ci; ++ci)
          for (int kz = 0; kz < d.KZ; ++kz) {
            const int zi = zo * sz + kz - pz;
            for (int ky = 0; ky < d.KY; ++ky) {
              const int yi = yo * sy + ky - py;
              const bool plane_ok = zi >= 0 && zi < d.Z && yi >= 0 && yi < d.Y;
              const Scalar* row =
                  plane_ok ? in + idx4(ci, 0, yi, zi, d.X, d.Y, d.Z) : nullptr;
              const int xi0 = xo * sx - px;
              for (int kx = 0; kx < d.KX; ++kx) {
                const int xi = xi0 + kx;
                *P++ = (plane_ok && xi >= 0 && xi < d.X) ? row[xi] : Scalar(0);
              }
            }
          }
}

template <typename Scalar>
void col2im_add(const Scalar* P, const Conv3dDims& d, Scalar* gin) {
  const int sx = d.stride[0], sy = d.stride[1], sz = d.stride[2];
  const int px = d.pad[0], py = d.pad[1], pz = d.pad[2];
  for (int zo = 0; zo < d.OZ; ++zo)
    for (int yo = 0; yo < d.OY; ++yo)
      for (int xo = 0; xo < d.OX; ++xo)
        for (int ci = 0; ci < d.Ci; ++ci)
          for (int kz = 0; kz < d.KZ; ++kz) {
            const int zi = zo * sz + kz - pz;
            for (int ky = 0; ky < d.KY; ++ky) {
              const int yi = yo * sy + ky - py;
              const bool plane_ok = zi >= 0 && zi < d.Z && yi >= 0 && yi < d.Y;
              Scalar* row = plane_ok ? gin + idx4(ci, 0, yi, zi, d.X, d.Y, d.Z) : nullptr;
              const int xi0 = xo * sx - px;
              for (int kx = 0; kx < d.KX; ++kx) {
                const int xi = xi0 + kx;
                if (plane_ok && xi >= 0 && xi < d.X) row[xi] += *P;
                ++P;
              }
            }
          }
}

template <typename Scalar>
void conv3d_forward_values(const ArrayX<Scalar>& in, const ArrayX<Scalar>& ker,
                           ArrayX<Scalar>& out, const Conv3dDims& d) {
  const std::int64_t R = conv_rows(d), N = conv_cols(d);
  auto& buf = conv_scratch<Scalar>();
  buf.resize(std::size_t(R * N));
  im2col(in.data(), d, buf.data());
  Eigen::Map<const MatRM<Scalar>> W(ker.data(), d.Co, R);
  Eigen::Map<const MatCM<Scalar>> P(buf.data(), R, N);
  Eigen::Map<MatRM<Scalar>> O(out.data(), d.Co, N);
  O.noalias() = W * P;
}

template <typename Scalar>
void conv3d_backward_input(const ArrayX<Scalar>& gout, const ArrayX<Scalar>& ker,
                           ArrayX<Scalar>& gin, const Conv3dDims& d) {
  const std::int64_t R = conv_rows(d), N = conv_cols(d);
  Eigen::Map<const MatRM<Scalar>> W(ker.data(), d.Co, R);
  Eigen::Map<const MatRM<Scalar>> dO(gout.data(), d.Co, N);
  MatCM<Scalar> dP(R, N);
  dP.noalias() = W.transpose() * dO;
  col2im_add(dP.data(), d, gin.data());
}

template <typename Scalar>
void conv3d_backward_kernel(const ArrayX<Scalar>& gout, const ArrayX<Scalar>& in,
                            ArrayX<Scalar>& gker, const Conv3dDims& d) {
  const std::int64_t R = conv_rows(d), N = conv_cols(d);
  auto& buf = conv_scratch<Scalar>();
  buf.resize(std::size_t(R * N));
  im2col(in.data(), d, buf.data());
  Eigen::Map<const MatCM<Scalar>> P(buf.data(), R, N);
  Eigen::Map<const MatRM<Scalar>> dO(gout.data(), d.Co, N);
  Eigen::Map<MatRM<Scalar>> dW(gker.data(), d.Co, R);
  dW.noalias() += dO * P.transpose();
}

}  // namespace detail

/// Standard cross-correlation. input [Ci,X,Y,Z], kernel [Co,Ci,KX,KY,KZ];
/// output extent per axis is (X + 2p - K)/s + 1.
template <typename Scalar>
Tensor<Scalar> conv3d(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                      Triple stride = {1, 1, 1}, Triple padding = {0, 0, 0}) {
  const detail::Conv3dDims d = detail::conv3d_dims(input, kernel, stride, padding);
  ArrayX<Scalar> out = ArrayX<Scalar>::Zero(std::int64_t(d.Co) * d.OX * d.OY * d.OZ);
  detail::conv3d_forward_values(input.values(), kernel.values(), out, d);
  auto in_n = input.node(), k_n = kernel.node();
  return detail::make_op<Scalar>("conv3d", {d.Co, d.OX, d.OY, d.OZ}, std::move(out), {in_n, k_n},
                                 [in_n, k_n, d](TensorNode<Scalar>& self) {
                                   if (in_n->needs_grad)
                                     detail::conv3d_backward_input(self.grad, k_n->values,
                                                                   in_n->grad, d);
                                   if (k_n->needs_grad)
                                     detail::conv3d_backward_kernel(self.grad, in_n->values,
                                                                    k_n->grad, d);
                                 });
}

/// x [C,X,Y,Z] + per-channel bias [C].
template <typename Scalar>
Tensor<Scalar> add_channel_bias(const Tensor<Scalar>& x, const Tensor<Scalar>& bias) {
  detail::check_rank("add_channel_bias", x, 4, "input");
  detail::check_rank("add_channel_bias", bias, 1, "bias");
  const int C = x.shape()[0];
  if (bias.shape()[0] != C)
    throw DimensionError("add_channel_bias: channel mismatch: input has " + std::to_string(C) +
                         ", bias has " + std::to_string(bias.shape()[0]));
  const std::int64_t vol = x.numel() / C;
  ArrayX<Scalar> out = x.values();
  for (int c = 0; c < C; ++c) out.segment(c * vol, vol) += bias.values()[c];
  auto xn = x.node(), bn = bias.node();
  return detail::make_op<Scalar>("add_channel_bias", x.shape(), std::move(out), {xn, bn},
                                 [xn, bn, C, vol](TensorNode<Scalar>& self) {
                                   if (xn->needs_grad) xn->grad += self.grad;
                                   if (bn->needs_grad)
                                     for (int c = 0; c < C; ++c)
                                       bn->grad[c] += self.grad.segment(c * vol, vol).sum();
                                 });
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Per-channel zero mean / unit variance over the spatial volume
/// (population variance).
template <typename Scalar>
Tensor<Scalar> instance_norm(const Tensor<Scalar>& x, Scalar eps = Scalar(1e-5)) {
  detail::check_rank("instance_norm", x, 4, "input");
  const int C = x.shape()[0];
  const std::int64_t vol = x.numel() / C;
  if (vol < 2)
    throw DimensionError("instance_norm: spatial volume must be >= 2 voxels, got " +
                         std::to_string(vol));
  ArrayX<Scalar> out(x.numel());
  ArrayX<Scalar> inv_std(C);
  for (int c = 0; c < C; ++c) {
    auto seg = x.values().segment(c * vol, vol);
    const Scalar mu = seg.mean();
    const Scalar var = (seg - mu).square().mean();
    inv_std[c] = Scalar(1) / std::sqrt(var + eps);
    out.segment(c * vol, vol) = (seg - mu) * inv_std[c];
  }
  auto xn = x.node();
  return detail::make_op<Scalar>(
      "instance_norm", x.shape(), std::move(out), {xn},
      [xn, C, vol, inv_std](TensorNode<Scalar>& self) {
        if (!xn->needs_grad) return;
        for (int c = 0; c < C; ++c) {
          auto g = self.grad.segment(c * vol, vol);
          auto y = self.values.segment(c * vol, vol);
          const Scalar g_mean = g.mean();
          const Scalar gy_mean = (g * y).mean();
          xn->grad.segment(c * vol, vol) += inv_std[c] * (g - g_mean - y * gy_mean);
        }
      });
}

// ---------------------------------------------------------------------------
// Distance
// ---------------------------------------------------------------------------

/// Euclidean norm of (a - b) as a scalar tensor. The gradient at a == b is
/// defined as 0 (subgradient of the norm at the origin).
template <typename Scalar>
Tensor<Scalar> l2_distance(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::check_rank("l2_distance", a, 1, "first input");
  detail::check_rank("l2_distance", b, 1, "second input");
  if (a.shape()[0] != b.shape()[0])
    throw DimensionError("l2_distance: length mismatch: " + std::to_string(a.shape()[0]) +
                         " vs " + std::to_string(b.shape()[0]));
  ArrayX<Scalar> diff = a.values() - b.values();
  const Scalar dist = std::sqrt(diff.square().sum());
  auto an = a.node(), bn = b.node();
  return detail::make_op<Scalar>(
      "l2_distance", {1}, ArrayX<Scalar>::Constant(1, dist), {an, bn},
      [an, bn, diff, dist](TensorNode<Scalar>& self) {
        if (dist <= Scalar(0)) return;
        const ArrayX<Scalar> unit = diff / dist * self.grad[0];
        if (an->needs_grad) an->grad += unit;
        if (bn->needs_grad) bn->grad -= unit;
      });
}

// ---------------------------------------------------------------------------
// Fused binary cross-entropy with logits (mean reduction)
// ---------------------------------------------------------------------------

/// Numerically stable mean BCE over logits against constant targets.
/// Gradients flow to the logits only.
template <typename Scalar>
Tensor<Scalar> bce_with_logits(const Tensor<Scalar>& logits, const Tensor<Scalar>& targets) {
  detail::check_same_shape("bce_with_logits", logits, targets);
  const auto& x = logits.values();
  const auto& t = targets.values();
  const Scalar n = Scalar(x.size());
  const Scalar val = (x.max(Scalar(0)) - x * t + (-x.abs()).exp().log1p()).sum() / n;
  auto xn = logits.node();
  return detail::make_op<Scalar>(
      "bce_with_logits", {1}, ArrayX<Scalar>::Constant(1, val), {xn},
      [xn, t, n](TensorNode<Scalar>& self) {
        if (!xn->needs_grad) return;
        const auto& x = xn->values;
        ArrayX<Scalar> pos = Scalar(1) / (Scalar(1) + (-x).exp());
        ArrayX<Scalar> ex = x.exp();
        ArrayX<Scalar> s = (x >= Scalar(0)).select(pos, ex / (Scalar(1) + ex));
        xn->grad += self.grad[0] * (s - t) / n;
      });
}

}  // namespace casediag
