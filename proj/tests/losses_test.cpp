#include <doctest.h>

#include <random>

#include "casediag/grad_check.hpp"
#include "casediag/losses.hpp"
#include "test_util.hpp"

using namespace casediag;
using T = Tensor<double>;

TEST_CASE("contrastive_loss: exact value table") {
  CHECK(contrastive_loss(T::scalar(0.7), 1, 1.0).value() == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(contrastive_loss(T::scalar(0.3), 0, 1.0).value() == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(contrastive_loss(T::scalar(1.2), 0, 1.0).value() == 0.0);
}

TEST_CASE("contrastive_loss: domain and parameter errors") {
  CHECK_THROWS_AS(contrastive_loss(T::scalar(-0.1), 1, 1.0), DomainError);
  CHECK_THROWS_AS(contrastive_loss(T::scalar(0.5), 2, 1.0), ParameterError);
}

TEST_CASE("contrastive_loss: gradient w.r.t. d is +1 / -1 / 0") {
  auto grad_at = [](double d, int y) {
    T dt = T::from_values({1}, ArrayX<double>::Constant(1, d), true);
    backward(contrastive_loss(dt, y, 1.0));
    return dt.grad()[0];
  };
  CHECK(grad_at(0.4, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(grad_at(0.4, 0) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(grad_at(1.7, 0) == 0.0);
  CHECK(grad_at(1.0, 0) == 0.0);  // subgradient at the margin defined as 0

  // finite differences away from the d = m kink
  for (double d : {0.2, 0.55, 1.4}) {
    GraphBuilder<double> b = [&](const std::vector<T>& in) {
      return contrastive_loss(relu(in[0]), 0, 1.0);
    };
    GradCheckOptions opts;
    opts.low = d;
    opts.high = d + 1e-9;
    auto res = grad_check<double>(b, {{1}}, 3, opts);
    CHECK(res.max_rel_error < 1e-6);
  }
}

TEST_CASE("dice term: hard p=[1,1,0,0] vs g=[1,0,1,0] gives 0.5") {
  // saturated logits: sigmoid(+-40) rounds to exactly 1 / ~0 in double
  ArrayX<double> logits(4), target(4);
  logits << 40, 40, -40, -40;
  target << 1, 0, 1, 0;
  T dice = dice_loss(T::from_values({4}, logits), T::from_values({4}, target), 0.0);
  CHECK(dice.value() == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("dice_ce_loss: perfect saturated prediction has tiny terms") {
  std::mt19937_64 rng(4);
  ArrayX<double> target(64);
  for (auto& v : target) v = double(rng() % 2);
  ArrayX<double> logits = (2 * target - 1) * 20.0;
  T t = T::from_values({64}, target);
  T l = T::from_values({64}, logits);
  CHECK(dice_loss(l, t, 1e-5).value() < 1e-3);
  CHECK(bce_with_logits(l, t).value() < 1e-3);
}

TEST_CASE("dice_ce_loss: all-empty masks degrade gracefully via eps") {
  T logits = T::filled({16}, -40.0);
  T target = T::zeros({16});
  CHECK(dice_loss(logits, target, 1e-5).value() == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("dice_ce_loss: non-binary target is rejected") {
  T logits = T::zeros({4});
  T target = T::filled({4}, 0.5);
  CHECK_THROWS_AS(dice_loss(logits, target, 1e-5), DomainError);
  CHECK_THROWS_AS(dice_loss(T::zeros({5}), T::zeros({4}), 1e-5), DimensionError);
}

TEST_CASE("dice_ce_loss: permutation invariance under consistent reordering") {
  std::mt19937_64 rng(5);
  const int n = 32;
  ArrayX<double> logits = test::random_array(n, rng, -3, 3);
  ArrayX<double> target(n);
  for (auto& v : target) v = double(rng() % 2);
  const double base =
      dice_ce_loss(T::from_values({n}, logits), T::from_values({n}, target), 1e-5).value();
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  ArrayX<double> pl(n), pt(n);
  for (int i = 0; i < n; ++i) {
    pl[i] = logits[perm[i]];
    pt[i] = target[perm[i]];
  }
  const double permuted =
      dice_ce_loss(T::from_values({n}, pl), T::from_values({n}, pt), 1e-5).value();
  CHECK(permuted == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("combined_loss: omega weighting and degeneracies") {
  std::mt19937_64 rng(6);
  const Shape ms{1, 4, 4, 2};
  ArrayX<double> m1(shape_numel(ms)), m2(shape_numel(ms));
  for (auto& v : m1) v = double(rng() % 2);
  for (auto& v : m2) v = double(rng() % 2);
  T target1 = T::from_values(ms, m1), target2 = T::from_values(ms, m2);
  T logits1 = test::random_tensor(ms, rng, false, -2, 2);
  T logits2 = test::random_tensor(ms, rng, false, -2, 2);
  T d = T::scalar(0.42);

  LossConfig cfg;
  cfg.omega = 0.0;
  const double l0 = combined_loss(d, 1, logits1, target1, logits2, target2, cfg).value();
  CHECK(l0 == doctest::Approx(0.42).epsilon(1e-12));

  // affine in omega with slope = sum of segmentation terms
  const double seg = dice_ce_loss(logits1, target1, cfg.dice_eps).value() +
                     dice_ce_loss(logits2, target2, cfg.dice_eps).value();
  for (double w : {0.5, 1.5, 4.0}) {
    cfg.omega = w;
    const double lw = combined_loss(d, 1, logits1, target1, logits2, target2, cfg).value();
    CHECK(lw == doctest::Approx(0.42 + w * seg).epsilon(1e-10));
    CHECK(lw >= 0.0);
  }
}

TEST_CASE("combined_loss: perfect masks and d=0 with y=1 vanish") {
  const Shape ms{1, 2, 2, 2};
  ArrayX<double> m(shape_numel(ms));
  m << 1, 0, 1, 0, 0, 1, 0, 1;
  T target = T::from_values(ms, m);
  T logits = T::from_values(ms, ((2 * m - 1) * 25.0).eval());
  LossConfig cfg;
  const double l =
      combined_loss(T::scalar(0.0), 1, logits, target, logits, target, cfg).value();
  CHECK(l < 1e-3);
  CHECK(l >= 0.0);
}

TEST_CASE("combined_loss: hand arithmetic 0.2 + 1.5 * (0.3 + 0.4) = 1.25") {
  // component values enter the sum exactly as stated
  const double lc = 0.2, ls1 = 0.3, ls2 = 0.4, omega = 1.5;
  CHECK(lc + omega * (ls1 + ls2) == doctest::Approx(1.25).epsilon(1e-15));
  // and through the graph composition with synthetic component tensors
  T total = add(T::scalar(lc), scale(add(T::scalar(ls1), T::scalar(ls2)), omega));
  CHECK(total.value() == doctest::Approx(1.25).epsilon(1e-15));
}
