#include <doctest.h>

#include <random>

#include "casediag/ops.hpp"
#include "test_util.hpp"

using namespace casediag;
using test::conv3d_oracle;
using test::random_tensor;

using T = Tensor<double>;

TEST_CASE("conv3d: 1x1x1 identity kernel reproduces the input") {
  std::mt19937_64 rng(1);
  T in = random_tensor({1, 4, 3, 2}, rng);
  T ker = T::filled({1, 1, 1, 1, 1}, 1.0);
  T out = conv3d(in, ker);
  REQUIRE(out.shape() == in.shape());
  CHECK((out.values() - in.values()).abs().maxCoeff() == 0.0);
}

TEST_CASE("conv3d: all-ones 2x2x2 kernel over all-ones 2x2x2 input sums to 8") {
  T in = T::filled({1, 2, 2, 2}, 1.0);
  T ker = T::filled({1, 1, 2, 2, 2}, 1.0);
  T out = conv3d(in, ker);
  REQUIRE(out.shape() == Shape{1, 1, 1, 1});
  CHECK(out.value() == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("conv3d: random 2-channel case matches the nested-loop oracle") {
  std::mt19937_64 rng(2);
  T in = random_tensor({2, 5, 5, 3}, rng);
  T ker = random_tensor({3, 2, 3, 3, 3}, rng);
  T out = conv3d(in, ker, {1, 1, 1}, {1, 1, 1});
  auto expect = conv3d_oracle(in.values(), in.shape(), ker.values(), ker.shape(), {1, 1, 1},
                              {1, 1, 1});
  REQUIRE(out.values().size() == expect.size());
  CHECK((out.values() - expect).abs().maxCoeff() < 1e-6);
}

TEST_CASE("conv3d: oracle equivalence over random shapes, strides and paddings") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 60; ++trial) {
    const int Ci = 1 + int(rng() % 3), Co = 1 + int(rng() % 3);
    Shape in_shape{Ci, 1 + int(rng() % 8), 1 + int(rng() % 8), 1 + int(rng() % 8)};
    Triple pad{int(rng() % 3), int(rng() % 3), int(rng() % 3)};
    Triple stride{1 + int(rng() % 2), 1 + int(rng() % 2), 1 + int(rng() % 2)};
    Shape ker_shape{Co, Ci, 0, 0, 0};
    for (int ax = 0; ax < 3; ++ax)
      ker_shape[2 + ax] = 1 + int(rng() % (in_shape[1 + ax] + 2 * pad[ax]));
    T in = random_tensor(in_shape, rng);
    T ker = random_tensor(ker_shape, rng);
    T out = conv3d(in, ker, stride, pad);
    auto expect =
        conv3d_oracle(in.values(), in_shape, ker.values(), ker_shape, stride, pad);
    REQUIRE(out.values().size() == expect.size());
    CHECK((out.values() - expect).abs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("conv3d: oversized kernel names the offending axis") {
  T in = T::filled({1, 4, 4, 2}, 1.0);
  T ker = T::filled({1, 1, 3, 3, 5}, 1.0);
  CHECK_THROWS_WITH_AS(conv3d(in, ker), doctest::Contains("Z"), DimensionError);
}

TEST_CASE("conv3d: channel mismatch is a dimension error") {
  T in = T::filled({2, 4, 4, 4}, 1.0);
  T ker = T::filled({1, 3, 3, 3, 3}, 1.0);
  CHECK_THROWS_AS(conv3d(in, ker, {1, 1, 1}, {1, 1, 1}), DimensionError);
}

TEST_CASE("upsample_nn: unit factor is the identity") {
  std::mt19937_64 rng(4);
  T in = random_tensor({2, 3, 2, 2}, rng);
  T out = upsample_nn(in, {1, 1, 1});
  CHECK((out.values() - in.values()).abs().maxCoeff() == 0.0);
}

TEST_CASE("upsample_nn: single voxel becomes a constant 2x2x2 block") {
  T in = T::filled({1, 1, 1, 1}, 3.5);
  T out = upsample_nn(in, {2, 2, 2});
  REQUIRE(out.shape() == Shape{1, 2, 2, 2});
  CHECK((out.values() == 3.5).all());
}

TEST_CASE("upsample_nn: gradient of the sum counts the repetitions") {
  T in = T::from_values({1, 1, 1, 1}, ArrayX<double>::Constant(1, 0.7), true);
  T loss = sum(upsample_nn(in, {2, 2, 2}));
  backward(loss);
  CHECK(in.grad()[0] == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("upsample_nn: non-positive factor is a parameter error") {
  T in = T::filled({1, 2, 2, 2}, 1.0);
  CHECK_THROWS_AS(upsample_nn(in, {0, 1, 1}), ParameterError);
}

TEST_CASE("relu and sigmoid basics") {
  T x = T::from_values({3}, (ArrayX<double>(3) << -3.0, 0.0, 2.0).finished());
  T r = relu(x);
  CHECK(r.values()[0] == 0.0);
  CHECK(r.values()[1] == 0.0);
  CHECK(r.values()[2] == 2.0);
  T s = sigmoid(T::scalar(0.0));
  CHECK(s.value() == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("sigmoid is stable at extreme logits") {
  T x = T::from_values({2}, (ArrayX<double>(2) << 800.0, -800.0).finished());
  T s = sigmoid(x);
  CHECK(s.values()[0] == 1.0);
  CHECK(s.values()[1] < 1e-300);
  CHECK(all_finite(s.values()));
}

TEST_CASE("global_avg_pool: constant volume maps to the constant per channel") {
  T x = T::filled({3, 2, 2, 2}, 0.25);
  T p = global_avg_pool(x);
  REQUIRE(p.shape() == Shape{3});
  CHECK((p.values() == 0.25).all());
}

TEST_CASE("instance_norm: constant channel collapses to zero") {
  T x = T::filled({2, 2, 2, 2}, 5.0);
  T y = instance_norm(x);
  CHECK(y.values().abs().maxCoeff() < 1e-9);
}

TEST_CASE("instance_norm: a +-1 channel stays put up to eps") {
  ArrayX<double> v(4);
  v << -1, 1, -1, 1;
  T x = T::from_values({1, 4, 1, 1}, v);
  T y = instance_norm(x, 1e-10);
  CHECK((y.values() - v).abs().maxCoeff() < 1e-6);
}

TEST_CASE("instance_norm: output moments are zero mean, unit variance") {
  std::mt19937_64 rng(5);
  T x = random_tensor({3, 6, 5, 4}, rng);
  T y = instance_norm(x);
  const std::int64_t vol = 6 * 5 * 4;
  for (int c = 0; c < 3; ++c) {
    auto seg = y.values().segment(c * vol, vol);
    CHECK(std::abs(seg.mean()) < 1e-6);
    CHECK(std::abs((seg - seg.mean()).square().mean() - 1.0) < 1e-3);
  }
}

TEST_CASE("l2_distance: coincident points and the 3-4-5 triangle") {
  std::mt19937_64 rng(6);
  T a = random_tensor({5}, rng);
  CHECK(l2_distance(a, a).value() == 0.0);
  T p = T::from_values({2}, (ArrayX<double>(2) << 0, 0).finished());
  T q = T::from_values({2}, (ArrayX<double>(2) << 3, 4).finished());
  CHECK(l2_distance(p, q).value() == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("l2_distance: unit-direction gradient") {
  T a = T::from_values({2}, (ArrayX<double>(2) << 1, 0).finished(), true);
  T b = T::from_values({2}, (ArrayX<double>(2) << 0, 0).finished(), true);
  T d = l2_distance(a, b);
  backward(d);
  CHECK(a.grad()[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a.grad()[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(b.grad()[0] == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("l2_distance: length mismatch is a dimension error") {
  T a = T::filled({3}, 1.0);
  T b = T::filled({4}, 1.0);
  CHECK_THROWS_AS(l2_distance(a, b), DimensionError);
}

TEST_CASE("elementwise ops require equal shapes") {
  T a = T::filled({2, 2, 2, 2}, 1.0);
  T b = T::filled({2, 2, 2, 1}, 1.0);
  CHECK_THROWS_AS(add(a, b), DimensionError);
  CHECK_THROWS_AS(mul(a, b), DimensionError);
  T c = T::filled({1, 2, 2, 2}, 1.0);
  CHECK_THROWS_AS(concat_channels(a, b), DimensionError);
  CHECK(concat_channels(a, c).shape() == Shape{3, 2, 2, 2});
}

TEST_CASE("backward: sum gives all-ones gradient") {
  std::mt19937_64 rng(7);
  T x = random_tensor({2, 3, 2, 2}, rng, true);
  backward(sum(x));
  CHECK((x.grad() == 1.0).all());
}

TEST_CASE("backward: quadratic gradient is 2x") {
  T x = T::from_values({2}, (ArrayX<double>(2) << 1, 2).finished(), true);
  backward(sum(mul(x, x)));
  CHECK(x.grad()[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(x.grad()[1] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("backward: non-scalar root and double backward are usage errors") {
  std::mt19937_64 rng(8);
  T x = random_tensor({4}, rng, true);
  CHECK_THROWS_AS(backward(relu(x)), UsageError);
  T loss = sum(relu(x));
  backward(loss);
  CHECK_THROWS_AS(backward(loss), UsageError);
  reset_grads(loss);
  CHECK_NOTHROW(backward(loss));
}

TEST_CASE("backward: linearity of gradient accumulation") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    T x = random_tensor({6}, rng, true);
    auto build1 = [&] { return sum(mul(x, x)); };
    auto build2 = [&] { return l2_distance(x, T::filled({6}, 0.5)); };
    const double alpha = 0.7, beta = -1.3;

    backward(build1());
    ArrayX<double> g1 = x.grad();
    backward(build2());
    ArrayX<double> g2 = x.grad();
    backward(add(scale(build1(), alpha), scale(build2(), beta)));
    ArrayX<double> g3 = x.grad();
    CHECK((g3 - (alpha * g1 + beta * g2)).abs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("forward ops keep finite inputs finite") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    T x = random_tensor({2, 4, 4, 2}, rng, false, -50.0, 50.0);
    T k = random_tensor({2, 2, 3, 3, 3}, rng);
    for (const T& t : {conv3d(x, k, {1, 1, 1}, {1, 1, 1}), relu(x), sigmoid(x),
                       instance_norm(x), upsample_nn(x, {2, 2, 1}), global_avg_pool(x)})
      CHECK(all_finite(t.values()));
  }
}

TEST_CASE("tensor: value-count mismatch against the shape is rejected") {
  CHECK_THROWS_AS(Tensor<double>::from_values({2, 2}, ArrayX<double>::Zero(3)), DimensionError);
}
