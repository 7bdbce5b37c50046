#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "casediag/io.hpp"
#include "casediag/rng.hpp"
#include "casediag/tensor.hpp"

namespace casediag {

// ---------------------------------------------------------------------------
// Volumes and cases
// ---------------------------------------------------------------------------

/// Scalar intensity volume, X-fastest storage, intensities in [0,1].
struct Volume {
  std::array<int, 3> dims{0, 0, 0};
  std::vector<float> values;

  static Volume zeros(std::array<int, 3> d) {
    Volume v;
    v.dims = d;
    v.values.assign(std::size_t(d[0]) * d[1] * d[2], 0.0f);
    return v;
  }
  std::int64_t numel() const { return std::int64_t(dims[0]) * dims[1] * dims[2]; }
  std::int64_t index(int x, int y, int z) const {
    return x + std::int64_t(dims[0]) * (y + std::int64_t(dims[1]) * z);
  }
  float& at(int x, int y, int z) { return values[index(x, y, z)]; }
  float at(int x, int y, int z) const { return values[index(x, y, z)]; }
  bool in_bounds(int x, int y, int z) const {
    return x >= 0 && x < dims[0] && y >= 0 && y < dims[1] && z >= 0 && z < dims[2];
  }
};

/// Binary mask volume with the same layout as Volume.
struct MaskVolume {
  std::array<int, 3> dims{0, 0, 0};
  std::vector<std::uint8_t> values;

  static MaskVolume zeros(std::array<int, 3> d) {
    MaskVolume m;
    m.dims = d;
    m.values.assign(std::size_t(d[0]) * d[1] * d[2], 0);
    return m;
  }
  std::int64_t numel() const { return std::int64_t(dims[0]) * dims[1] * dims[2]; }
  std::int64_t index(int x, int y, int z) const {
    return x + std::int64_t(dims[0]) * (y + std::int64_t(dims[1]) * z);
  }
  std::uint8_t& at(int x, int y, int z) { return values[index(x, y, z)]; }
  std::uint8_t at(int x, int y, int z) const { return values[index(x, y, z)]; }
  std::int64_t foreground_count() const {
    std::int64_t n = 0;
    for (auto v : values) n += v;
    return n;
  }
};

/// One nodule instance. label = 1 (malignant) iff score > 3.
struct Case {
  std::string id;
  Volume image;
  MaskVolume mask;
  int label = 0;
  int score = 1;
};

inline void validate_case(const Case& c) {
  if (c.image.dims != c.mask.dims)
    throw FormatError("case " + c.id + ": image dims vs mask dims mismatch");
  if (c.image.numel() != std::int64_t(c.image.values.size()))
    throw FormatError("case " + c.id + ": image value count does not match dims");
  if (c.mask.numel() != std::int64_t(c.mask.values.size()))
    throw FormatError("case " + c.id + ": mask value count does not match dims");
  for (auto v : c.mask.values)
    if (v > 1) throw FormatError("case " + c.id + ": mask is not binary");
  if (c.mask.foreground_count() == 0) throw DataError("case " + c.id + ": empty mask");
  if (c.score < 1 || c.score > 5)
    throw FormatError("case " + c.id + ": score must be in 1..5, got " + std::to_string(c.score));
  if (c.label != (c.score > 3 ? 1 : 0))
    throw FormatError("case " + c.id + ": label " + std::to_string(c.label) +
                      " inconsistent with score " + std::to_string(c.score) +
                      " (label must be 1 iff score > 3)");
}

template <typename Scalar>
Tensor<Scalar> to_tensor(const Volume& v) {
  ArrayX<Scalar> a(v.numel());
  for (std::int64_t i = 0; i < v.numel(); ++i) a[i] = Scalar(v.values[i]);
  return Tensor<Scalar>::from_values({1, v.dims[0], v.dims[1], v.dims[2]}, std::move(a));
}

template <typename Scalar>
Tensor<Scalar> to_tensor(const MaskVolume& m) {
  ArrayX<Scalar> a(m.numel());
  for (std::int64_t i = 0; i < m.numel(); ++i) a[i] = Scalar(m.values[i]);
  return Tensor<Scalar>::from_values({1, m.dims[0], m.dims[1], m.dims[2]}, std::move(a));
}

// ---------------------------------------------------------------------------
// Cropping
// ---------------------------------------------------------------------------

inline std::array<double, 3> mask_centroid(const MaskVolume& m) {
  double sx = 0, sy = 0, sz = 0, n = 0;
  for (int z = 0; z < m.dims[2]; ++z)
    for (int y = 0; y < m.dims[1]; ++y)
      for (int x = 0; x < m.dims[0]; ++x)
        if (m.at(x, y, z)) {
          sx += x;
          sy += y;
          sz += z;
          n += 1;
        }
  if (n == 0) throw DataError("mask_centroid: empty mask");
  return {sx / n, sy / n, sz / n};
}

/// Crop centered on the mask centroid; regions outside the volume are
/// zero-padded (image and mask alike).
inline std::pair<Volume, MaskVolume> crop_patch(const Case& c, std::array<int, 3> size) {
  for (int ax = 0; ax < 3; ++ax)
    if (size[ax] < 1) throw ParameterError("crop_patch: size must be positive");
  const auto ctr = mask_centroid(c.mask);
  std::array<int, 3> start;
  for (int ax = 0; ax < 3; ++ax)
    start[ax] = int(std::lround(ctr[ax])) - size[ax] / 2;
  Volume patch = Volume::zeros(size);
  MaskVolume mask = MaskVolume::zeros(size);
  for (int z = 0; z < size[2]; ++z)
    for (int y = 0; y < size[1]; ++y)
      for (int x = 0; x < size[0]; ++x) {
        const int sx = start[0] + x, sy = start[1] + y, sz = start[2] + z;
        if (c.image.in_bounds(sx, sy, sz)) {
          patch.at(x, y, z) = c.image.at(sx, sy, sz);
          mask.at(x, y, z) = c.mask.at(sx, sy, sz);
        }
      }
  return {std::move(patch), std::move(mask)};
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

struct AugmentConfig {
  double probability = 0.8;
  double contrast_lo = 0.8, contrast_hi = 1.25;
  double noise_sigma_lo = 0.0, noise_sigma_hi = 0.05;
  double rot_max_deg = 10.0;      // in-plane affine rotation
  double scale_lo = 0.9, scale_hi = 1.1;
  double translate_max_vox = 2.0;  // X/Y; Z uses half
  bool operator==(const AugmentConfig&) const = default;
};

namespace detail {

template <typename Vol>
Vol flip_axis(const Vol& v, int axis) {
  Vol out = v;
  for (int z = 0; z < v.dims[2]; ++z)
    for (int y = 0; y < v.dims[1]; ++y)
      for (int x = 0; x < v.dims[0]; ++x) {
        const int sx = axis == 0 ? v.dims[0] - 1 - x : x;
        const int sy = axis == 1 ? v.dims[1] - 1 - y : y;
        const int sz = axis == 2 ? v.dims[2] - 1 - z : z;
        out.at(x, y, z) = v.at(sx, sy, sz);
      }
  return out;
}

/// k quarter turns in the X/Y plane; requires a square X/Y footprint.
template <typename Vol>
Vol rot90_xy(const Vol& v, int k) {
  k = ((k % 4) + 4) % 4;
  Vol out = v;
  const int N = v.dims[0];
  for (int turn = 0; turn < k; ++turn) {
    Vol next = out;
    for (int z = 0; z < v.dims[2]; ++z)
      for (int y = 0; y < N; ++y)
        for (int x = 0; x < N; ++x) next.at(x, y, z) = out.at(y, N - 1 - x, z);
    out = next;
  }
  return out;
}

inline float sample_trilinear(const Volume& v, double x, double y, double z) {
  const int x0 = int(std::floor(x)), y0 = int(std::floor(y)), z0 = int(std::floor(z));
  const double fx = x - x0, fy = y - y0, fz = z - z0;
  double acc = 0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const int xi = x0 + dx, yi = y0 + dy, zi = z0 + dz;
        if (!v.in_bounds(xi, yi, zi)) continue;  // zero padding
        const double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
        acc += w * v.at(xi, yi, zi);
      }
  return float(acc);
}

}  // namespace detail

/// Small in-plane rotation + isotropic scale + translation, applied jointly
/// to image (trilinear) and mask (nearest-neighbor, stays binary).
inline std::pair<Volume, MaskVolume> affine_warp(const Volume& img, const MaskVolume& mask,
                                                 double angle_rad, double scl,
                                                 std::array<double, 3> shift) {
  Volume out_img = Volume::zeros(img.dims);
  MaskVolume out_mask = MaskVolume::zeros(mask.dims);
  const double cx = (img.dims[0] - 1) / 2.0, cy = (img.dims[1] - 1) / 2.0,
               cz = (img.dims[2] - 1) / 2.0;
  const double ca = std::cos(angle_rad), sa = std::sin(angle_rad);
  for (int z = 0; z < img.dims[2]; ++z)
    for (int y = 0; y < img.dims[1]; ++y)
      for (int x = 0; x < img.dims[0]; ++x) {
        // inverse map: undo translation, then rotation/scale about the center
        const double ux = x - shift[0] - cx, uy = y - shift[1] - cy, uz = z - shift[2] - cz;
        const double sxr = (ca * ux + sa * uy) / scl + cx;
        const double syr = (-sa * ux + ca * uy) / scl + cy;
        const double szr = uz / scl + cz;
        out_img.at(x, y, z) = detail::sample_trilinear(img, sxr, syr, szr);
        const int nx = int(std::lround(sxr)), ny = int(std::lround(syr)),
                  nz = int(std::lround(szr));
        if (nx >= 0 && nx < mask.dims[0] && ny >= 0 && ny < mask.dims[1] && nz >= 0 &&
            nz < mask.dims[2])
          out_mask.at(x, y, z) = mask.at(nx, ny, nz);
      }
  return {std::move(out_img), std::move(out_mask)};
}

/// Online augmentation: with probability cfg.probability applies a random
/// subset of {90-degree X/Y rotation, X/Y flips, small affine warp, contrast
/// scaling, Gaussian noise}. Geometric ops hit patch and mask jointly;
/// intensity ops hit the patch only. Fully determined by the seed.
inline std::pair<Volume, MaskVolume> augment(const Volume& patch, const MaskVolume& mask,
                                             const AugmentConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Volume img = patch;
  MaskVolume msk = mask;
  if (uni(rng) >= cfg.probability) return {std::move(img), std::move(msk)};

  const bool square_xy = patch.dims[0] == patch.dims[1];
  if (uni(rng) < 0.5 && square_xy) {
    const int k = 1 + int(rng() % 3);
    img = detail::rot90_xy(img, k);
    msk = detail::rot90_xy(msk, k);
  }
  for (int axis = 0; axis < 2; ++axis)
    if (uni(rng) < 0.5) {
      img = detail::flip_axis(img, axis);
      msk = detail::flip_axis(msk, axis);
    }
  if (uni(rng) < 0.5) {
    const double ang = (uni(rng) * 2 - 1) * cfg.rot_max_deg * M_PI / 180.0;
    const double scl = cfg.scale_lo + uni(rng) * (cfg.scale_hi - cfg.scale_lo);
    const double t = cfg.translate_max_vox;
    std::array<double, 3> shift{(uni(rng) * 2 - 1) * t, (uni(rng) * 2 - 1) * t,
                                (uni(rng) * 2 - 1) * t / 2};
    std::tie(img, msk) = affine_warp(img, msk, ang, scl, shift);
  }
  if (uni(rng) < 0.5) {
    const double c = cfg.contrast_lo + uni(rng) * (cfg.contrast_hi - cfg.contrast_lo);
    double mean = 0;
    for (float v : img.values) mean += v;
    mean /= double(img.values.size());
    for (float& v : img.values)
      v = float(std::clamp(mean + c * (v - mean), 0.0, 1.0));
  }
  if (uni(rng) < 0.5) {
    const double sigma =
        cfg.noise_sigma_lo + uni(rng) * (cfg.noise_sigma_hi - cfg.noise_sigma_lo);
    std::normal_distribution<double> noise(0.0, sigma);
    if (sigma > 0)
      for (float& v : img.values) v = float(std::clamp(v + noise(rng), 0.0, 1.0));
  }
  return {std::move(img), std::move(msk)};
}

// ---------------------------------------------------------------------------
// Pair sampling
// ---------------------------------------------------------------------------

/// Two independently cropped and augmented patches plus the same-class
/// indicator y.
struct PairSample {
  Volume patch1, patch2;
  MaskVolume mask1, mask2;
  int y = 0;
  std::string id1, id2;
};

/// Balanced Siamese pair sampling: y=1 with probability 1/2, members always
/// distinct cases. Both classes must be present. Augmentation seeds come
/// from `aug_rng` when given (a dedicated sub-stream), else from `rng`.
inline PairSample sample_pair(const std::vector<Case>& cases, std::array<int, 3> patch_size,
                              const AugmentConfig& aug, std::mt19937_64& rng,
                              std::mt19937_64* aug_rng = nullptr) {
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < cases.size(); ++i) by_class[cases[i].label == 1].push_back(i);
  if (by_class[0].empty() || by_class[1].empty())
    throw DataError("sample_pair: dataset must contain both classes");

  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const int y = uni(rng) < 0.5 ? 1 : 0;
  std::size_t ia, ib;
  if (y == 1) {
    int cls = uni(rng) < 0.5 ? 0 : 1;
    if (by_class[cls].size() < 2) cls = 1 - cls;
    if (by_class[cls].size() < 2)
      throw DataError("sample_pair: need at least two cases in one class for same-class pairs");
    const auto& pool = by_class[cls];
    ia = pool[rng() % pool.size()];
    do {
      ib = pool[rng() % pool.size()];
    } while (ib == ia);
  } else {
    ia = by_class[0][rng() % by_class[0].size()];
    ib = by_class[1][rng() % by_class[1].size()];
  }

  PairSample out;
  out.y = y;
  out.id1 = cases[ia].id;
  out.id2 = cases[ib].id;
  auto [p1, m1] = crop_patch(cases[ia], patch_size);
  auto [p2, m2] = crop_patch(cases[ib], patch_size);
  std::mt19937_64& ar = aug_rng ? *aug_rng : rng;
  std::tie(out.patch1, out.mask1) = augment(p1, m1, aug, ar());
  std::tie(out.patch2, out.mask2) = augment(p2, m2, aug, ar());
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic nodule generator
// ---------------------------------------------------------------------------

/// Synthetic desk-scale nodule: benign cases are smooth ellipsoids, malignant
/// cases add radial spicules and boundary roughness; the mask is the
/// generating shape. Deterministic per (label, seed).
inline Case synth_case(int label, std::array<int, 3> dims, std::uint64_t seed) {
  if (label != 0 && label != 1) throw ParameterError("synth_case: label must be 0 or 1");
  std::mt19937_64 rng(detail::splitmix64(seed * 2 + std::uint64_t(label)));
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Case c;
  c.id = std::string(label ? "malignant_" : "benign_") + std::to_string(seed);
  c.label = label;
  c.score = label ? 4 + int(rng() % 2) : 1 + int(rng() % 3);
  c.image = Volume::zeros(dims);
  c.mask = MaskVolume::zeros(dims);

  // background: Gaussian texture around a soft tissue level
  for (float& v : c.image.values) v = float(std::clamp(0.18 + 0.035 * gauss(rng), 0.0, 1.0));

  const double cx = dims[0] / 2.0 + (uni(rng) * 2 - 1) * 1.5;
  const double cy = dims[1] / 2.0 + (uni(rng) * 2 - 1) * 1.5;
  const double cz = dims[2] / 2.0 + (uni(rng) * 2 - 1) * 1.0;
  double rad[3];
  for (double& r : rad) r = 2.0 + uni(rng) * 2.0;  // 2..4 voxels
  rad[2] = std::min(rad[2], dims[2] / 2.0 - 1.5);  // keep the nodule inside thin volumes
  const double brightness = 0.55 + uni(rng) * 0.25;

  // boundary roughness as a few random plane waves over the direction vector
  const int n_waves = label ? 5 : 0;
  double wa[5], wk[5][3], wp[5];
  for (int i = 0; i < n_waves; ++i) {
    wa[i] = 0.06 + 0.08 * uni(rng);
    for (double& k : wk[i]) k = gauss(rng) * 2.0;
    wp[i] = uni(rng) * 2 * M_PI;
  }

  struct Spicule {
    double dir[3], len, sigma;
  };
  std::vector<Spicule> spic;
  if (label == 1) {
    const int n_sp = 4 + int(rng() % 7);  // 4..10
    for (int i = 0; i < n_sp; ++i) {
      Spicule s;
      double n2 = 0;
      do {
        s.dir[0] = gauss(rng);
        s.dir[1] = gauss(rng);
        s.dir[2] = gauss(rng) * 0.4;  // mostly in-plane (anisotropic Z)
        n2 = s.dir[0] * s.dir[0] + s.dir[1] * s.dir[1] + s.dir[2] * s.dir[2];
      } while (n2 < 1e-6);
      const double n = std::sqrt(n2);
      for (double& d : s.dir) d /= n;
      s.len = 2.0 + uni(rng) * 2.0;     // voxels beyond the boundary
      s.sigma = 0.55 + uni(rng) * 0.35;
      spic.push_back(s);
    }
  }

  for (int z = 0; z < dims[2]; ++z)
    for (int y = 0; y < dims[1]; ++y)
      for (int x = 0; x < dims[0]; ++x) {
        const double ux = x - cx, uy = y - cy, uz = z - cz;
        const double r = std::sqrt((ux / rad[0]) * (ux / rad[0]) + (uy / rad[1]) * (uy / rad[1]) +
                                   (uz / rad[2]) * (uz / rad[2]));
        double thresh = 1.0;
        if (n_waves > 0 && r > 1e-9) {
          const double inv = 1.0 / std::sqrt(ux * ux + uy * uy + uz * uz);
          const double dx = ux * inv, dy = uy * inv, dz = uz * inv;
          for (int i = 0; i < n_waves; ++i)
            thresh += wa[i] * std::cos(wk[i][0] * dx + wk[i][1] * dy + wk[i][2] * dz + wp[i]);
        }
        bool inside = r <= thresh;
        // soft-edged intensity bump
        double intensity = brightness / (1.0 + std::exp((r - thresh) / 0.12));
        for (const auto& s : spic) {
          const double t = ux * s.dir[0] + uy * s.dir[1] + uz * s.dir[2];
          if (t <= 0) continue;
          const double w2 = ux * ux + uy * uy + uz * uz;
          const double perp = std::sqrt(std::max(0.0, w2 - t * t));
          // boundary radius of the ellipsoid along this spicule
          const double rdl = std::sqrt((s.dir[0] / rad[0]) * (s.dir[0] / rad[0]) +
                                       (s.dir[1] / rad[1]) * (s.dir[1] / rad[1]) +
                                       (s.dir[2] / rad[2]) * (s.dir[2] / rad[2]));
          const double rb = 1.0 / rdl;
          if (t <= rb + s.len) {
            if (perp <= s.sigma) inside = true;
            const double fall = 1.0 - 0.5 * t / (rb + s.len);
            intensity = std::max(
                intensity, brightness * fall * std::exp(-(perp * perp) / (2 * s.sigma * s.sigma)));
          }
        }
        if (inside) c.mask.at(x, y, z) = 1;
        const float v = c.image.at(x, y, z);
        c.image.at(x, y, z) = float(std::clamp(double(v) + intensity, 0.0, 1.0));
      }
  return c;
}

// ---------------------------------------------------------------------------
// On-disk case format
// ---------------------------------------------------------------------------

/// Directory layout: meta.json {id, dims [X,Y,Z], label, score} +
/// image.f32raw (little-endian float32, X-fastest) + mask.u8raw ({0,1}).
inline void save_case(const Case& c, const std::filesystem::path& dir) {
  validate_case(c);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  Json meta;
  meta["id"] = c.id;
  meta["dims"] = {c.image.dims[0], c.image.dims[1], c.image.dims[2]};
  meta["label"] = c.label;
  meta["score"] = c.score;
  save_json(dir / "meta.json", meta);
  write_bytes(dir / "image.f32raw", c.image.values.data(), c.image.values.size() * sizeof(float));
  write_bytes(dir / "mask.u8raw", c.mask.values.data(), c.mask.values.size());
}

inline Case load_case(const std::filesystem::path& dir) {
  const Json meta = load_json(dir / "meta.json");
  const std::string where = "case meta " + (dir / "meta.json").string();
  Case c;
  c.id = json_get<std::string>(meta, "id", where);
  const auto dims = json_get<std::vector<int>>(meta, "dims", where);
  if (dims.size() != 3) throw FormatError(where + ": dims must have 3 entries");
  c.label = json_get<int>(meta, "label", where);
  c.score = json_get<int>(meta, "score", where);

  c.image.dims = {dims[0], dims[1], dims[2]};
  const auto img_bytes = read_bytes(dir / "image.f32raw");
  if (img_bytes.size() != std::size_t(c.image.numel()) * sizeof(float))
    throw FormatError("case " + c.id + ": image.f32raw holds " +
                      std::to_string(img_bytes.size() / sizeof(float)) + " values, dims need " +
                      std::to_string(c.image.numel()));
  c.image.values.resize(std::size_t(c.image.numel()));
  std::memcpy(c.image.values.data(), img_bytes.data(), img_bytes.size());

  c.mask.dims = c.image.dims;
  const auto mask_bytes = read_bytes(dir / "mask.u8raw");
  if (mask_bytes.size() != std::size_t(c.mask.numel()))
    throw FormatError("case " + c.id + ": mask.u8raw holds " + std::to_string(mask_bytes.size()) +
                      " values, dims need " + std::to_string(c.mask.numel()));
  c.mask.values.assign(mask_bytes.begin(), mask_bytes.end());

  validate_case(c);
  return c;
}

// ---------------------------------------------------------------------------
// Dataset manifest
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string dir;   // case directory, relative to the manifest
  std::string split; // train | val | test
};

inline void save_manifest(const std::vector<ManifestEntry>& entries,
                          const std::filesystem::path& path) {
  Json j = Json::array();
  for (const auto& e : entries) j.push_back(Json{{"dir", e.dir}, {"split", e.split}});
  save_json(path, j);
}

inline std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  const Json j = load_json(path);
  if (!j.is_array()) throw FormatError("manifest " + path.string() + ": expected a JSON array");
  std::vector<ManifestEntry> entries;
  for (const auto& e : j)
    entries.push_back({json_get<std::string>(e, "dir", "manifest entry"),
                       json_get<std::string>(e, "split", "manifest entry")});
  return entries;
}

/// Loads all cases of one split.
inline std::vector<Case> load_split(const std::filesystem::path& manifest_path,
                                    const std::string& split) {
  const auto entries = load_manifest(manifest_path);
  const auto root = manifest_path.parent_path();
  std::vector<Case> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(load_case(root / e.dir));
  return out;
}

/// No case id may appear twice, in particular not in two different splits.
inline void validate_split_disjoint(const std::filesystem::path& manifest_path) {
  const auto entries = load_manifest(manifest_path);
  const auto root = manifest_path.parent_path();
  std::vector<std::pair<std::string, std::string>> seen;  // id -> split
  for (const auto& e : entries) {
    const Json meta = load_json(root / e.dir / "meta.json");
    const auto id = json_get<std::string>(meta, "id", "manifest case " + e.dir);
    for (const auto& [sid, ssplit] : seen)
      if (sid == id)
        throw DataError("manifest: case id \"" + id + "\" appears in both " + ssplit + " and " +
                        e.split);
    seen.emplace_back(id, e.split);
  }
}

}  // namespace casediag
