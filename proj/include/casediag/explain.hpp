#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "casediag/data.hpp"
#include "casediag/model.hpp"
#include "casediag/png.hpp"

namespace casediag {

enum class CamBranch { query, support };

/// Nonnegative per-voxel saliency at one target layer's resolution.
template <typename Scalar>
struct AttentionMap {
  std::array<int, 3> dims{0, 0, 0};
  ArrayX<Scalar> values;
  int level = 0;
  CamBranch branch = CamBranch::query;

  bool is_zero() const { return (values == Scalar(0)).all(); }
};

/// Max-normalized copy (max 1 unless the map is identically zero).
template <typename Scalar>
AttentionMap<Scalar> normalized(AttentionMap<Scalar> map) {
  const Scalar mx = map.values.size() ? map.values.maxCoeff() : Scalar(0);
  if (mx > Scalar(0)) map.values /= mx;
  return map;
}

/// w_k = ReLU(dd/dA_k), elementwise over channels and voxels — the spatial
/// structure is kept, no channel pooling.
template <typename Scalar>
ArrayX<Scalar> grad_weights(const Tensor<Scalar>& activation) {
  if (!activation.has_grad())
    throw UsageError("grad_weights: activation has no gradient (run backward from d first)");
  return activation.node()->grad.max(Scalar(0));
}

/// L_t = ReLU(sum_k upstream .* w_k .* A_k), channel-summed at one layer.
/// `acts` and `weights` are [C,X,Y,Z]-shaped flat arrays, `upstream` is the
/// [X,Y,Z] map of the previous (deeper) layer already resampled here.
template <typename Scalar>
AttentionMap<Scalar> layer_attention(const ArrayX<Scalar>& acts, const ArrayX<Scalar>& weights,
                                     const ArrayX<Scalar>& upstream,
                                     const Shape& act_shape) {
  if (act_shape.size() != 4)
    throw DimensionError("layer_attention: activations must be [C,X,Y,Z]");
  const int C = act_shape[0];
  const std::int64_t vol = shape_numel(act_shape) / C;
  if (acts.size() != weights.size() || acts.size() != shape_numel(act_shape))
    throw DimensionError("layer_attention: activations vs weights size mismatch");
  if (upstream.size() != vol)
    throw DimensionError("layer_attention: upstream map has " + std::to_string(upstream.size()) +
                         " voxels, layer has " + std::to_string(vol));
  ArrayX<Scalar> acc = ArrayX<Scalar>::Zero(vol);
  for (int c = 0; c < C; ++c)
    acc += weights.segment(c * vol, vol) * acts.segment(c * vol, vol);
  AttentionMap<Scalar> map;
  map.dims = {act_shape[1], act_shape[2], act_shape[3]};
  map.values = (upstream * acc).max(Scalar(0));
  return map;
}

/// Nearest-neighbor resampling of an [X,Y,Z] scalar field.
template <typename Scalar>
ArrayX<Scalar> nn_resample3(const ArrayX<Scalar>& src, std::array<int, 3> sd,
                            std::array<int, 3> dd) {
  ArrayX<Scalar> out(std::int64_t(dd[0]) * dd[1] * dd[2]);
  std::int64_t i = 0;
  for (int z = 0; z < dd[2]; ++z) {
    const int sz = int(std::int64_t(z) * sd[2] / dd[2]);
    for (int y = 0; y < dd[1]; ++y) {
      const int sy = int(std::int64_t(y) * sd[1] / dd[1]);
      const std::int64_t base = std::int64_t(sd[0]) * (sy + std::int64_t(sd[1]) * sz);
      for (int x = 0; x < dd[0]; ++x)
        out[i++] = src[base + std::int64_t(x) * sd[0] / dd[0]];
    }
  }
  return out;
}

template <typename Scalar>
struct BranchAttention {
  std::vector<AttentionMap<Scalar>> layers;  // deepest first, per target layer
  AttentionMap<Scalar> finest;               // shallowest map at patch resolution
};

template <typename Scalar>
struct SiameseCam {
  double distance = 0;
  BranchAttention<Scalar> query, support;
};

/// Siamese Local-CAM: forward both branches to the pair distance d, backward
/// from d, then per branch chain the per-layer attention deepest-to-
/// shallowest, seeding the deepest layer with upstream == 1 and resampling
/// each map to the next layer's resolution. An identical pair has d = 0 with
/// zero gradients and therefore identically zero maps.
template <typename Scalar>
SiameseCam<Scalar> siamese_local_cam(const UNetModel<Scalar>& model,
                                     const AlignDistHead<Scalar>& head,
                                     const Tensor<Scalar>& query_patch,
                                     const Tensor<Scalar>& support_patch,
                                     std::vector<int> target_layers = {}) {
  const int L = model.config().levels;
  if (target_layers.empty())
    for (int t = L - 1; t >= 0; --t) target_layers.push_back(t);
  for (std::size_t i = 0; i < target_layers.size(); ++i) {
    if (target_layers[i] < 0 || target_layers[i] >= L)
      throw ParameterError("siamese_local_cam: layer " + std::to_string(target_layers[i]) +
                           " not in encoder chain [0, " + std::to_string(L) + ")");
    if (i > 0 && target_layers[i] >= target_layers[i - 1])
      throw ParameterError("siamese_local_cam: target layers must run deepest to shallowest");
  }

  // Gradients flow from d through the encoder only; the decoder does not
  // participate in the distance.
  EncoderForward<Scalar> b1 = model.forward_encoder(query_patch);
  EncoderForward<Scalar> b2 = model.forward_encoder(support_patch);
  Tensor<Scalar> dist = align_dist(head, b1.code, b2.code);
  backward(dist);

  SiameseCam<Scalar> cam;
  cam.distance = double(dist.value());
  const auto patch_dims = model.config().patch_shape;
  for (CamBranch branch : {CamBranch::query, CamBranch::support}) {
    const auto& maps = branch == CamBranch::query ? b1.encoder_maps : b2.encoder_maps;
    BranchAttention<Scalar> ba;
    ArrayX<Scalar> upstream;
    std::array<int, 3> up_dims{};
    for (int t : target_layers) {
      const Tensor<Scalar>& act = maps[t];
      const std::array<int, 3> dims{act.shape()[1], act.shape()[2], act.shape()[3]};
      ArrayX<Scalar> up =
          ba.layers.empty()
              ? ArrayX<Scalar>::Ones(std::int64_t(dims[0]) * dims[1] * dims[2])
              : nn_resample3(upstream, up_dims, dims);
      AttentionMap<Scalar> map =
          layer_attention(act.values(), grad_weights(act), up, act.shape());
      map.level = t;
      map.branch = branch;
      upstream = map.values;
      up_dims = map.dims;
      ba.layers.push_back(std::move(map));
    }
    ba.finest = ba.layers.back();
    if (ba.finest.dims != patch_dims) {
      ba.finest.values = nn_resample3(ba.finest.values, ba.finest.dims, patch_dims);
      ba.finest.dims = patch_dims;
    }
    (branch == CamBranch::query ? cam.query : cam.support) = std::move(ba);
  }
  return cam;
}

// ---------------------------------------------------------------------------
// Slice selection and overlay rendering
// ---------------------------------------------------------------------------

struct SliceChoice {
  int z = 0;
  bool zero_attention = false;
};

/// Z slice with maximal summed attention; ties resolve to the smallest z,
/// an all-zero map flags zero_attention.
template <typename Scalar>
SliceChoice select_best_slice(const AttentionMap<Scalar>& map) {
  if (map.values.size() == 0) throw ParameterError("select_best_slice: empty map");
  const std::int64_t plane = std::int64_t(map.dims[0]) * map.dims[1];
  SliceChoice best;
  Scalar best_sum = Scalar(-1);
  for (int z = 0; z < map.dims[2]; ++z) {
    const Scalar s = map.values.segment(z * plane, plane).sum();
    if (s > best_sum) {
      best_sum = s;
      best.z = z;
    }
  }
  best.zero_attention = map.is_zero();
  return best;
}

struct OverlaySpec {
  double threshold = 0.5;  // contour level on the max-normalized map
  int upscale = 8;         // nearest-neighbor magnification
  int fixed_slice = -1;    // -1: pick the best slice by attention mass
};

struct ContourSegment {
  double x0, y0, x1, y1;
};

/// Classic marching squares at `level` over an X-by-Y field (values at
/// pixel centers); ambiguous saddles resolve by the cell-center average.
template <typename Scalar>
std::vector<ContourSegment> marching_squares(const ArrayX<Scalar>& field, int X, int Y,
                                             double level) {
  std::vector<ContourSegment> segs;
  auto v = [&](int x, int y) { return double(field[x + std::int64_t(X) * y]); };
  auto lerp = [&](double a, double b) { return (level - a) / (b - a); };
  for (int y = 0; y + 1 < Y; ++y)
    for (int x = 0; x + 1 < X; ++x) {
      const double v00 = v(x, y), v10 = v(x + 1, y), v01 = v(x, y + 1), v11 = v(x + 1, y + 1);
      int id = (v00 >= level) | (v10 >= level) << 1 | (v11 >= level) << 2 | (v01 >= level) << 3;
      if (id == 0 || id == 15) continue;
      // edge crossing points (t: top, r: right, b: bottom, l: left)
      const double tx = x + lerp(v00, v10), ty = y;
      const double rx = x + 1, ry = y + lerp(v10, v11);
      const double bx = x + lerp(v01, v11), by = y + 1;
      const double lx = x, ly = y + lerp(v00, v01);
      auto emit = [&](double ax, double ay, double cx, double cy) {
        segs.push_back({ax, ay, cx, cy});
      };
      switch (id) {
        case 1: case 14: emit(lx, ly, tx, ty); break;
        case 2: case 13: emit(tx, ty, rx, ry); break;
        case 3: case 12: emit(lx, ly, rx, ry); break;
        case 4: case 11: emit(rx, ry, bx, by); break;
        case 6: case 9: emit(tx, ty, bx, by); break;
        case 7: case 8: emit(lx, ly, bx, by); break;
        case 5:
        case 10: {
          const bool center = (v00 + v10 + v01 + v11) / 4.0 >= level;
          if ((id == 5) == center) {
            emit(lx, ly, tx, ty);
            emit(rx, ry, bx, by);
          } else {
            emit(tx, ty, rx, ry);
            emit(lx, ly, bx, by);
          }
          break;
        }
        default: break;
      }
    }
  return segs;
}

namespace detail {

inline void draw_segment(std::vector<std::uint8_t>& rgb, int W, int H, double x0, double y0,
                         double x1, double y1) {
  const int steps = std::max(2, int(std::ceil(std::hypot(x1 - x0, y1 - y0) * 2)));
  for (int i = 0; i <= steps; ++i) {
    const double t = double(i) / steps;
    const int x = int(std::lround(x0 + t * (x1 - x0)));
    const int y = int(std::lround(y0 + t * (y1 - y0)));
    if (x < 0 || x >= W || y < 0 || y >= H) continue;
    auto* p = &rgb[3 * (std::size_t(y) * W + x)];
    p[0] = 255;
    p[1] = 255;
    p[2] = 0;  // yellow, matching the outlined-region presentation
  }
}

}  // namespace detail

/// Grayscale slice of the patch with the attention contour burned in at
/// spec.threshold of the max-normalized map. The map must already be at
/// patch resolution. Deterministic pixels for fixed inputs.
template <typename Scalar>
SliceChoice render_overlay(const Volume& patch, const AttentionMap<Scalar>& map,
                           const OverlaySpec& spec, const std::filesystem::path& path) {
  if (patch.dims != map.dims)
    throw DimensionError("render_overlay: map resolution does not match patch");
  const AttentionMap<Scalar> norm = normalized(map);
  SliceChoice slice = select_best_slice(norm);
  if (spec.fixed_slice >= 0) slice.z = std::min(spec.fixed_slice, patch.dims[2] - 1);

  const int X = patch.dims[0], Y = patch.dims[1], U = std::max(1, spec.upscale);
  const int W = X * U, H = Y * U;
  std::vector<std::uint8_t> rgb(std::size_t(W) * H * 3);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const float g = patch.at(x / U, y / U, slice.z);
      const auto b = std::uint8_t(std::clamp(g, 0.0f, 1.0f) * 255.0f + 0.5f);
      auto* p = &rgb[3 * (std::size_t(y) * W + x)];
      p[0] = p[1] = p[2] = b;
    }
  if (!slice.zero_attention) {
    const std::int64_t plane = std::int64_t(X) * Y;
    const ArrayX<Scalar> field = norm.values.segment(slice.z * plane, plane);
    for (const auto& s : marching_squares(field, X, Y, spec.threshold)) {
      auto up = [U](double c) { return (c + 0.5) * U - 0.5; };
      detail::draw_segment(rgb, W, H, up(s.x0), up(s.y0), up(s.x1), up(s.y1));
    }
  }
  png::write_rgb8(path, rgb, W, H);
  return slice;
}

}  // namespace casediag
