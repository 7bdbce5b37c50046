#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

#include "casediag/ops.hpp"
#include "casediag/rng.hpp"
#include "casediag/tensor.hpp"

namespace casediag {

/// Builds a scalar-valued graph from the given leaf tensors. Must be a pure
/// function of the leaf values (it is re-invoked for every finite-difference
/// evaluation).
template <typename Scalar>
using GraphBuilder = std::function<Tensor<Scalar>(const std::vector<Tensor<Scalar>>&)>;

struct GradCheckOptions {
  double step = 1e-4;
  int max_coords = 50;
  double low = -1.0, high = 1.0;  // uniform range for generated leaf values
  // Differentiability mask per input; empty means all inputs are checked.
  std::vector<bool> differentiable;
  // Central differences are only valid where the graph is smooth across
  // [x-h, x+h]. Coordinates whose perturbation moves any relu input (or an
  // l2 distance) across its kink are excluded and resampled — the
  // generalization of excluding relu inputs at exactly 0. Detection is
  // exact: the activation-side pattern of every kinked op is hashed per
  // evaluation, so a genuine gradient bug on a smooth sample still fails.
  bool kink_filter = true;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  int coords_checked = 0;
  int coords_excluded = 0;
};

namespace detail {

inline void digest_bit(std::uint64_t& h, std::uint64_t index, bool bit) {
  h ^= splitmix64(index * 2 + (bit ? 1 : 0));
}

/// Hash of which side of its kink every nonsmooth op sits on.
template <typename Scalar>
std::uint64_t activation_side_digest(const Tensor<Scalar>& root) {
  std::uint64_t h = 0;
  std::uint64_t index = 0;
  for (auto* n : topo_order(root.node().get())) {
    const std::string_view op(n->op);
    if (op == "relu") {
      const auto& pv = n->parents[0]->values;
      for (std::int64_t i = 0; i < pv.size(); ++i) digest_bit(h, index++, pv[i] > Scalar(0));
    } else if (op == "l2_distance") {
      digest_bit(h, index++, n->values[0] > Scalar(0));
    }
  }
  return h;
}

}  // namespace detail

/// Compares analytic gradients against central finite differences on up to
/// `max_coords` randomly sampled input coordinates. Relative error uses
/// |a - n| / max(|a|, |n|, 1e-8).
template <typename Scalar>
GradCheckResult grad_check(const GraphBuilder<Scalar>& builder,
                           const std::vector<Shape>& input_shapes, std::uint64_t seed,
                           const GradCheckOptions& opts = {}) {
  std::mt19937_64 rng(detail::splitmix64(seed));
  std::uniform_real_distribution<double> uni(opts.low, opts.high);

  std::vector<ArrayX<Scalar>> base(input_shapes.size());
  for (std::size_t i = 0; i < input_shapes.size(); ++i) {
    base[i] = ArrayX<Scalar>(shape_numel(input_shapes[i]));
    for (auto& v : base[i]) v = Scalar(uni(rng));
  }

  auto make_inputs = [&](bool with_grad) {
    std::vector<Tensor<Scalar>> inputs;
    inputs.reserve(base.size());
    for (std::size_t i = 0; i < base.size(); ++i)
      inputs.push_back(Tensor<Scalar>::from_values(input_shapes[i], base[i], with_grad));
    return inputs;
  };

  // Analytic pass.
  auto inputs = make_inputs(true);
  Tensor<Scalar> root = builder(inputs);
  if (root.numel() != 1) throw UsageError("grad_check: builder must return a scalar");
  const std::uint64_t digest0 = detail::activation_side_digest(root);
  backward(root);
  std::vector<ArrayX<Scalar>> analytic(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i)
    if (inputs[i].has_grad()) analytic[i] = inputs[i].grad();

  auto eval = [&]() {
    auto probe = make_inputs(false);
    Tensor<Scalar> r = builder(probe);
    return std::pair<double, std::uint64_t>(double(r.value()),
                                            detail::activation_side_digest(r));
  };

  const bool masked = !opts.differentiable.empty();
  std::vector<std::pair<std::size_t, std::int64_t>> coords;
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (masked && !opts.differentiable[i]) continue;
    for (std::int64_t j = 0; j < base[i].size(); ++j) coords.emplace_back(i, j);
  }
  std::shuffle(coords.begin(), coords.end(), rng);

  const double h = opts.step;
  GradCheckResult res;
  for (const auto& [i, j] : coords) {
    if (res.coords_checked >= opts.max_coords) break;
    const Scalar saved = base[i][j];
    base[i][j] = saved + Scalar(h);
    const auto [fp, dp] = eval();
    base[i][j] = saved - Scalar(h);
    const auto [fm, dm] = eval();
    base[i][j] = saved;

    if (opts.kink_filter && (dp != digest0 || dm != digest0)) {
      ++res.coords_excluded;
      continue;
    }
    const double numeric = (fp - fm) / (2 * h);
    const double a = double(analytic[i].size() ? analytic[i][j] : Scalar(0));
    const double scale = std::max({std::abs(a), std::abs(numeric), 1e-8});
    res.max_rel_error = std::max(res.max_rel_error, std::abs(a - numeric) / scale);
    ++res.coords_checked;
  }
  return res;
}

}  // namespace casediag
