#include <doctest.h>

#include "casediag/grad_check.hpp"
#include "casediag/losses.hpp"
#include "casediag/model.hpp"
#include "test_util.hpp"

using namespace casediag;
using T = Tensor<double>;

namespace {

// Small desk-scale Siamese graph used across the FD checks.
UNetConfig tiny_unet() {
  UNetConfig cfg;
  cfg.levels = 2;
  cfg.base_channels = 4;
  cfg.patch_shape = {8, 8, 4};
  return cfg;
}

}  // namespace

TEST_CASE("grad_check: linear graph is exact") {
  GraphBuilder<double> builder = [](const std::vector<T>& in) {
    return sum(add(scale(in[0], 3.0), in[1]));
  };
  auto res = grad_check<double>(builder, {{2, 3, 2, 2}, {2, 3, 2, 2}}, 11);
  CHECK(res.coords_checked > 0);
  CHECK(res.max_rel_error < 1e-8);
}

TEST_CASE("grad_check: per-op finite differences") {
  GradCheckOptions opts;

  SUBCASE("conv3d, both inputs") {
    GraphBuilder<double> b = [](const std::vector<T>& in) {
      return sum(conv3d(in[0], in[1], {2, 1, 1}, {1, 1, 0}));
    };
    auto res = grad_check<double>(b, {{2, 5, 4, 3}, {3, 2, 3, 3, 3}}, 21, opts);
    CHECK(res.max_rel_error < 1e-6);
  }
  SUBCASE("add_channel_bias") {
    GraphBuilder<double> b = [](const std::vector<T>& in) {
      return l2_distance(global_avg_pool(add_channel_bias(in[0], in[1])),
                         T::filled({3}, 0.2));
    };
    auto res = grad_check<double>(b, {{3, 3, 3, 2}, {3}}, 22, opts);
    CHECK(res.max_rel_error < 1e-6);
  }
  SUBCASE("upsample_nn") {
    GraphBuilder<double> b = [](const std::vector<T>& in) {
      return l2_distance(global_avg_pool(upsample_nn(in[0], {2, 2, 2})), T::filled({2}, 0.1));
    };
    auto res = grad_check<double>(b, {{2, 3, 2, 2}}, 23, opts);
    CHECK(res.max_rel_error < 1e-6);
  }
  SUBCASE("relu, sampled away from the kink") {
    GradCheckOptions away = opts;
    away.low = 0.2;  // relu at exactly 0 (and near it) excluded from sampling
    GraphBuilder<double> b = [](const std::vector<T>& in) {
      return sum(relu(sub(in[0], in[1])));
    };
    away.differentiable = {true, false};
    auto res = grad_check<double>(b, {{4, 2, 2, 2}, {4, 2, 2, 2}}, 24, away);
    CHECK(res.max_rel_error < 1e-6);
  }
  SUBCASE("sigmoid + mul + div") {
    GraphBuilder<double> b = [](const std::vector<T>& in) {
      T s = sigmoid(in[0]);
      return div(sum(mul(s, in[1])), add_scalar(sum(sigmoid(in[1])), 3.0));
    };
    auto res = grad_check<double>(b, {{6}, {6}}, 25, opts);
    CHECK(res.max_rel_error < 1e-6);
  }
  SUBCASE("instance_norm") {
    GraphBuilder<double> b = [](const std::vector<T>& in) {
      return l2_distance(global_avg_pool(mul(instance_norm(in[0]), in[0])),
                         T::filled({2}, 0.3));
    };
    auto res = grad_check<double>(b, {{2, 4, 3, 2}}, 26, opts);
    CHECK(res.max_rel_error < 1e-5);
  }
  SUBCASE("l2_distance") {
    GraphBuilder<double> b = [](const std::vector<T>& in) {
      return l2_distance(in[0], in[1]);
    };
    auto res = grad_check<double>(b, {{7}, {7}}, 27, opts);
    CHECK(res.max_rel_error < 1e-6);
  }
  SUBCASE("bce_with_logits against a constant target") {
    GraphBuilder<double> b = [](const std::vector<T>& in) {
      ArrayX<double> t(8);
      t << 1, 0, 1, 1, 0, 0, 1, 0;
      return bce_with_logits(in[0], T::from_values({8}, t));
    };
    auto res = grad_check<double>(b, {{8}}, 28, opts);
    CHECK(res.max_rel_error < 1e-6);
  }
  SUBCASE("concat_channels") {
    GraphBuilder<double> b = [](const std::vector<T>& in) {
      return l2_distance(global_avg_pool(concat_channels(in[0], in[1])), T::filled({3}, 0.1));
    };
    auto res = grad_check<double>(b, {{1, 3, 2, 2}, {2, 3, 2, 2}}, 29, opts);
    CHECK(res.max_rel_error < 1e-6);
  }
}

TEST_CASE("grad_check: full Siamese forward to d") {
  const UNetConfig cfg = tiny_unet();
  UNetModel<double> model = UNetModel<double>::build(cfg, 99);
  AlignDistHead<double> head = AlignDistHead<double>::identity(cfg.latent_dim());
  GraphBuilder<double> builder = [&](const std::vector<T>& in) {
    return siamese_forward(model, head, in[0], in[1]).distance;
  };
  GradCheckOptions opts;
  opts.low = 0.0;
  opts.high = 1.0;
  opts.kink_filter = true;
  const Shape ps{1, cfg.patch_shape[0], cfg.patch_shape[1], cfg.patch_shape[2]};
  for (std::uint64_t seed : {31, 32, 33}) {
    auto res = grad_check<double>(builder, {ps, ps}, seed, opts);
    CAPTURE(seed);
    CHECK(res.max_rel_error < 1e-4);
  }
}

TEST_CASE("grad_check: combined loss graph") {
  const UNetConfig cfg = tiny_unet();
  UNetModel<double> model = UNetModel<double>::build(cfg, 100);
  AlignDistHead<double> head = AlignDistHead<double>::identity(cfg.latent_dim());
  LossConfig loss;
  std::mt19937_64 rng(5);
  const Shape ps{1, cfg.patch_shape[0], cfg.patch_shape[1], cfg.patch_shape[2]};
  ArrayX<double> m1(shape_numel(ps)), m2(shape_numel(ps));
  for (auto& v : m1) v = double(rng() % 2);
  for (auto& v : m2) v = double(rng() % 2);
  GraphBuilder<double> builder = [&](const std::vector<T>& in) {
    auto out = siamese_forward(model, head, in[0], in[1]);
    return combined_loss(out.distance, 1, out.branch1.mask_logits, T::from_values(ps, m1),
                         out.branch2.mask_logits, T::from_values(ps, m2), loss);
  };
  GradCheckOptions opts;
  opts.low = 0.0;
  opts.high = 1.0;
  opts.kink_filter = true;
  opts.max_coords = 30;
  auto res = grad_check<double>(builder, {ps, ps}, 41, opts);
  CHECK(res.max_rel_error < 1e-4);
}
