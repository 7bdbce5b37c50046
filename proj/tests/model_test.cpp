#include <doctest.h>

#include <random>

#include "casediag/model.hpp"
#include "test_util.hpp"

using namespace casediag;
using test::random_tensor;
using T = Tensor<double>;

TEST_CASE("build_unet: desk config bottleneck geometry") {
  UNetConfig cfg;
  cfg.levels = 3;
  cfg.base_channels = 8;
  cfg.patch_shape = {16, 16, 8};
  CHECK(cfg.latent_dim() == 32);
  auto model = UNetModel<double>::build(cfg, 1);
  std::mt19937_64 rng(2);
  T patch = random_tensor({1, 16, 16, 8}, rng, false, 0.0, 1.0);
  auto out = model.forward(patch);
  CHECK(out.code.shape() == Shape{32});
  CHECK(out.mask_logits.shape() == Shape{1, 16, 16, 8});
  REQUIRE(out.encoder_maps.size() == 3);
  CHECK(out.encoder_maps[2].shape() == Shape{32, 4, 4, 2});
}

TEST_CASE("build_unet: same seed gives bit-identical weights") {
  UNetConfig cfg;
  cfg.levels = 2;
  cfg.base_channels = 4;
  cfg.patch_shape = {8, 8, 4};
  auto m1 = UNetModel<double>::build(cfg, 77);
  auto m2 = UNetModel<double>::build(cfg, 77);
  auto p1 = m1.named_parameters();
  auto p2 = m2.named_parameters();
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(p1[i].first == p2[i].first);
    CHECK((p1[i].second.values() == p2[i].second.values()).all());
  }
}

TEST_CASE("build_unet: levels=1 keeps the input resolution") {
  UNetConfig cfg;
  cfg.levels = 1;
  cfg.base_channels = 4;
  cfg.patch_shape = {6, 5, 3};
  auto model = UNetModel<double>::build(cfg, 3);
  std::mt19937_64 rng(4);
  auto out = model.forward(random_tensor({1, 6, 5, 3}, rng));
  CHECK(out.mask_logits.shape() == Shape{1, 6, 5, 3});
  CHECK(out.code.shape() == Shape{4});
}

TEST_CASE("build_unet: indivisible patch shape is a config error") {
  UNetConfig cfg;
  cfg.levels = 3;
  cfg.base_channels = 4;
  cfg.patch_shape = {16, 16, 6};  // 6 % 4 != 0
  CHECK_THROWS_AS(UNetModel<double>::build(cfg, 1), ConfigError);
}

TEST_CASE("encode: zero patch with zero-bias model gives the zero code") {
  UNetConfig cfg;
  cfg.levels = 2;
  cfg.base_channels = 4;
  cfg.patch_shape = {8, 8, 4};
  cfg.norm_enabled = false;  // norm of an all-zero channel is zero anyway; keep it pure
  auto model = UNetModel<double>::build(cfg, 5);
  T zero = T::zeros({1, 8, 8, 4});
  CHECK(encode(model, zero).values().abs().maxCoeff() == 0.0);
}

TEST_CASE("encode and forward_segment: deterministic, shape contracts") {
  UNetConfig cfg;
  cfg.levels = 2;
  cfg.base_channels = 4;
  cfg.patch_shape = {8, 8, 4};
  auto model = UNetModel<double>::build(cfg, 6);
  std::mt19937_64 rng(7);
  T patch = random_tensor({1, 8, 8, 4}, rng, false, 0.0, 1.0);
  T c1 = encode(model, patch);
  T c2 = encode(model, patch);
  CHECK(c1.shape() == Shape{cfg.latent_dim()});
  CHECK((c1.values() == c2.values()).all());
  T m1 = forward_segment(model, patch);
  T m2 = forward_segment(model, patch);
  CHECK((m1.values() == m2.values()).all());
  CHECK_THROWS_AS(model.forward(random_tensor({1, 8, 8, 8}, rng)), DimensionError);
}

TEST_CASE("forward_segment: decoder weights receive gradient from Dice-CE") {
  UNetConfig cfg;
  cfg.levels = 2;
  cfg.base_channels = 4;
  cfg.patch_shape = {8, 8, 4};
  auto model = UNetModel<double>::build(cfg, 8);
  std::mt19937_64 rng(9);
  T patch = random_tensor({1, 8, 8, 4}, rng, false, 0.0, 1.0);
  T logits = forward_segment(model, patch);
  ArrayX<double> mask(logits.numel());
  for (auto& v : mask) v = double(rng() % 2);
  T target = T::from_values(logits.shape(), mask);
  backward(bce_with_logits(logits, target));
  double dec_grad_norm = 0;
  for (const auto& [name, p] : model.named_parameters())
    if (name.rfind("dec", 0) == 0 || name.rfind("head", 0) == 0)
      dec_grad_norm += double(p.grad().abs().sum());
  CHECK(dec_grad_norm > 0);
}

TEST_CASE("align_dist: identity head reduces to the Euclidean distance") {
  auto head = AlignDistHead<double>::identity(2);
  T c1 = T::from_values({2}, (ArrayX<double>(2) << 0, 0).finished());
  T c2 = T::from_values({2}, (ArrayX<double>(2) << 3, 4).finished());
  CHECK(align_dist(head, c1, c2).value() == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(align_dist(head, c1, c1).value() == 0.0);
}

TEST_CASE("align_dist: elementwise A weights the difference") {
  auto head = AlignDistHead<double>::identity(2);
  head.A.values() << 2, 0;
  head.b.values() << 13.0, -4.5;  // arbitrary bias, cancels
  T c1 = T::from_values({2}, (ArrayX<double>(2) << 1, 5).finished());
  T c2 = T::from_values({2}, (ArrayX<double>(2) << 0, -7).finished());
  CHECK(align_dist(head, c1, c2).value() == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("align_dist: b is bit-irrelevant to d") {
  std::mt19937_64 rng(10);
  auto head = AlignDistHead<double>::identity(6);
  head.A.values() = test::random_array(6, rng);
  T c1 = random_tensor({6}, rng);
  T c2 = random_tensor({6}, rng);
  const double d0 = align_dist(head, c1, c2).value();
  head.b.values() = test::random_array(6, rng, -100.0, 100.0);
  const double d1 = align_dist(head, c1, c2).value();
  CHECK(d0 == d1);
  CHECK_THROWS_AS(align_dist(head, random_tensor({5}, rng), c2), DimensionError);
}

TEST_CASE("siamese_forward: shared weights, symmetric distance") {
  UNetConfig cfg;
  cfg.levels = 2;
  cfg.base_channels = 4;
  cfg.patch_shape = {8, 8, 4};
  auto model = UNetModel<double>::build(cfg, 11);
  auto head = AlignDistHead<double>::identity(cfg.latent_dim());
  std::mt19937_64 rng(12);
  T p = random_tensor({1, 8, 8, 4}, rng, false, 0.0, 1.0);
  T q = random_tensor({1, 8, 8, 4}, rng, false, 0.0, 1.0);

  CHECK(siamese_forward(model, head, p, p).distance.value() == 0.0);
  const double dpq = siamese_forward(model, head, p, q).distance.value();
  const double dqp = siamese_forward(model, head, q, p).distance.value();
  CHECK(std::abs(dpq - dqp) < 1e-9);
}

TEST_CASE("siamese_forward: encoder gets gradient from both loss terms") {
  UNetConfig cfg;
  cfg.levels = 2;
  cfg.base_channels = 4;
  cfg.patch_shape = {8, 8, 4};
  auto model = UNetModel<double>::build(cfg, 13);
  auto head = AlignDistHead<double>::identity(cfg.latent_dim());
  std::mt19937_64 rng(14);
  T p = random_tensor({1, 8, 8, 4}, rng, false, 0.0, 1.0);
  T q = random_tensor({1, 8, 8, 4}, rng, false, 0.0, 1.0);

  auto enc_grad_sum = [&](const Tensor<double>& root) {
    backward(root);
    double s = 0;
    for (const auto& [name, par] : model.named_parameters())
      if (name.rfind("enc", 0) == 0) s += double(par.grad().abs().sum());
    return s;
  };
  auto out1 = siamese_forward(model, head, p, q);
  CHECK(enc_grad_sum(out1.distance) > 0);

  auto out2 = siamese_forward(model, head, p, q);
  ArrayX<double> mask(shape_numel(out2.branch1.mask_logits.shape()));
  for (auto& v : mask) v = double(rng() % 2);
  T target = T::from_values(out2.branch1.mask_logits.shape(), mask);
  CHECK(enc_grad_sum(bce_with_logits(out2.branch1.mask_logits, target)) > 0);
}

TEST_CASE("weight sharing survives parameter mutation") {
  UNetConfig cfg;
  cfg.levels = 1;
  cfg.base_channels = 2;
  cfg.patch_shape = {4, 4, 2};
  auto model = UNetModel<double>::build(cfg, 15);
  std::mt19937_64 rng(16);
  T p = random_tensor({1, 4, 4, 2}, rng, false, 0.0, 1.0);
  const double before = encode(model, p).values().sum();
  Tensor<double> first = model.named_parameters()[0].second;
  first.values() *= 2.0;  // both Siamese branches see the mutation
  auto out = siamese_forward(model, AlignDistHead<double>::identity(cfg.latent_dim()), p, p);
  CHECK(out.distance.value() == 0.0);
  CHECK(encode(model, p).values().sum() != before);
}
