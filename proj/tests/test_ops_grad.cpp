// Finite-difference oracle for every differentiable op, in 32-bit training
// precision and the 64-bit gradient-check mode.
#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "tridec/batchnorm.hpp"
#include "tridec/conv.hpp"
#include "tridec/gradcheck.hpp"
#include "tridec/ops.hpp"

using namespace tridec;

namespace {

template <typename S>
struct FdCfg;
template <>
struct FdCfg<float> {
  static constexpr double h = 3e-3;
  static constexpr double tol = 1e-3;
};
template <>
struct FdCfg<double> {
  static constexpr double h = 1e-5;
  static constexpr double tol = 1e-6;
};

// Uniform values bounded away from zero, so relu kinks and log/reciprocal
// floors stay out of the difference stencil.
template <typename S>
Tensor<S> rand_signed(std::vector<int> shape, Rng& rng) {
  const std::size_t n = checked_size(shape);
  std::vector<S> v(n);
  for (auto& x : v) {
    double d = rng.uniform(-1.5, 1.5);
    if (d > -0.15 && d < 0.15) d += d >= 0 ? 0.35 : -0.35;
    x = static_cast<S>(d);
  }
  return Tensor<S>(std::move(shape), std::move(v), true);
}

template <typename S>
Tensor<S> rand_positive(std::vector<int> shape, Rng& rng) {
  return testutil::rand_tensor<S>(std::move(shape), rng, 0.4, 1.6);
}

template <typename S, typename Fn>
void expect_grad_ok(Fn&& fn, std::vector<Tensor<S>*> params) {
  const double err = finite_difference_check<S>(
      std::forward<Fn>(fn), std::span<Tensor<S>* const>(params.data(), params.size()),
      {.h = FdCfg<S>::h});
  INFO("max relative error " << err);
  CHECK(err < FdCfg<S>::tol);
}

}  // namespace

TEMPLATE_TEST_CASE("elementwise and scalar op gradients", "[grad]", float, double) {
  using S = TestType;
  Rng rng(11);
  auto a = rand_signed<S>({3, 4}, rng);
  auto b = rand_signed<S>({3, 4}, rng);

  expect_grad_ok<S>([&] { return sum(add(a, b)); }, {&a, &b});
  expect_grad_ok<S>([&] { return sum(square(sub(a, b))); }, {&a, &b});
  expect_grad_ok<S>([&] { return sum(mul(a, b)); }, {&a, &b});
  expect_grad_ok<S>([&] { return sum(square(a)); }, {&a});
  expect_grad_ok<S>([&] { return sum(relu(a)); }, {&a});
  expect_grad_ok<S>([&] { return sum(scalar_mul(scalar_add(a, S(0.7)), S(-1.3))); }, {&a});
  expect_grad_ok<S>([&] { return mean(mul(a, a)); }, {&a});
}

TEMPLATE_TEST_CASE("log and reciprocal gradients", "[grad]", float, double) {
  using S = TestType;
  Rng rng(13);
  auto x = rand_positive<S>({4, 3}, rng);
  expect_grad_ok<S>([&] { return sum(log(x)); }, {&x});
  expect_grad_ok<S>([&] { return sum(reciprocal(x)); }, {&x});
  expect_grad_ok<S>([&] { return sum(mul(x, log(x))); }, {&x});
}

TEMPLATE_TEST_CASE("reduction and broadcast gradients", "[grad]", float, double) {
  using S = TestType;
  Rng rng(17);
  auto x = rand_positive<S>({5, 3}, rng);
  auto r = rand_positive<S>({5, 1}, rng);
  auto bias = rand_signed<S>({3}, rng);

  expect_grad_ok<S>([&] { return sum(square(row_sum(x))); }, {&x});
  expect_grad_ok<S>([&] { return sum(square(col_mean(x))); }, {&x});
  expect_grad_ok<S>([&] { return sum(square(div_rowwise(x, r))); }, {&x, &r});
  expect_grad_ok<S>([&] { return sum(square(add_bias(x, bias))); }, {&x, &bias});
  expect_grad_ok<S>([&] { return sum(square(reshape(x, {3, 5}))); }, {&x});
}

TEMPLATE_TEST_CASE("matmul chain gradient", "[grad]", float, double) {
  using S = TestType;
  Rng rng(19);
  auto a = rand_positive<S>({3, 4}, rng);
  auto b = rand_positive<S>({4, 2}, rng);
  auto c = rand_positive<S>({2, 3}, rng);
  expect_grad_ok<S>([&] { return sum(square(matmul(matmul(a, b), c))); }, {&a, &b, &c});
}

TEST_CASE("matmul chain gradient at the documented 32-bit step size") {
  Rng rng(23);
  auto a = rand_positive<float>({3, 3}, rng);
  auto b = rand_positive<float>({3, 3}, rng);
  Tensor<float>* params[] = {&a, &b};
  const double err = finite_difference_check<float>(
      [&] { return sum(square(matmul(a, b))); }, params, {.h = 1e-3});
  CHECK(err < 1e-3);
}

TEMPLATE_TEST_CASE("distance op gradients", "[grad]", float, double) {
  using S = TestType;
  Rng rng(29);
  auto a = rand_signed<S>({4, 3}, rng);
  auto b = rand_signed<S>({4, 3}, rng);
  auto centers = rand_signed<S>({2, 3}, rng);
  expect_grad_ok<S>([&] { return sum(l2_sq_distance(a, b)); }, {&a, &b});
  expect_grad_ok<S>([&] { return sum(square(pairwise_sq_dist(a, centers))); }, {&a, &centers});
}

TEMPLATE_TEST_CASE("conv2d gradient", "[grad]", float, double) {
  using S = TestType;
  Rng rng(31);
  auto x = rand_signed<S>({2, 2, 5, 5}, rng);
  auto k = rand_signed<S>({3, 2, 3, 3}, rng);
  expect_grad_ok<S>([&] { return sum(square(conv2d(x, k, 1, 1))); }, {&x, &k});

  auto k2 = rand_signed<S>({2, 2, 3, 3}, rng);
  expect_grad_ok<S>([&] { return sum(square(conv2d(x, k2, 2, 1))); }, {&x, &k2});
}

TEMPLATE_TEST_CASE("transposed_conv2d gradient", "[grad]", float, double) {
  using S = TestType;
  Rng rng(37);
  auto x = rand_signed<S>({2, 3, 3, 3}, rng);
  auto k = rand_signed<S>({3, 2, 3, 3}, rng);
  expect_grad_ok<S>([&] { return sum(square(transposed_conv2d(x, k, 2, 1, 1))); }, {&x, &k});
  expect_grad_ok<S>([&] { return sum(square(transposed_conv2d(x, k, 2, 1, 0))); }, {&x, &k});
}

TEMPLATE_TEST_CASE("maxpool2d gradient", "[grad]", float, double) {
  using S = TestType;
  Rng rng(41);
  auto x = rand_signed<S>({2, 2, 5, 5}, rng);
  expect_grad_ok<S>([&] { return sum(square(maxpool2d(x, 2, 2))); }, {&x});
}

TEMPLATE_TEST_CASE("batch_norm gradient in both modes", "[grad]", float, double) {
  using S = TestType;
  Rng rng(43);
  auto x4 = rand_signed<S>({4, 2, 3, 3}, rng);
  auto x2 = rand_signed<S>({6, 3}, rng);
  auto g4 = rand_positive<S>({2}, rng);
  auto b4 = rand_signed<S>({2}, rng);
  auto g2 = rand_positive<S>({3}, rng);
  auto b2 = rand_signed<S>({3}, rng);

  BatchNormStats<S> s4(2), s2(3);
  expect_grad_ok<S>(
      [&] { return sum(square(batch_norm(x4, g4, b4, s4, Mode::train))); }, {&x4, &g4, &b4});
  expect_grad_ok<S>(
      [&] { return sum(square(batch_norm(x2, g2, b2, s2, Mode::train))); }, {&x2, &g2, &b2});

  BatchNormStats<S> se(2);
  Rng srng(47);
  for (auto& v : se.running_mean) v = static_cast<S>(srng.uniform(-0.3, 0.3));
  for (auto& v : se.running_var) v = static_cast<S>(srng.uniform(0.5, 1.5));
  expect_grad_ok<S>(
      [&] { return sum(square(batch_norm(x4, g4, b4, se, Mode::eval))); }, {&x4, &g4, &b4});
}

TEST_CASE("relu forward fixture") {
  Tensor<float> x({3}, std::vector<float>{-1, 0, 2});
  auto y = relu(x);
  CHECK(testutil::to_vec(y.values()) == std::vector<float>{0, 0, 2});
}

TEST_CASE("shape mismatches name the op and both shapes") {
  Tensor<float> a({2, 3}, 1.0f);
  Tensor<float> b({3, 2}, 1.0f);
  CHECK_THROWS_WITH(add(a, b), Catch::Matchers::ContainsSubstring("add") &&
                                   Catch::Matchers::ContainsSubstring("[2x3]") &&
                                   Catch::Matchers::ContainsSubstring("[3x2]"));
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
  CHECK_THROWS_AS(l2_sq_distance(a, b), ShapeError);
}

TEST_CASE("forward ops preserve finiteness on finite inputs") {
  Rng rng(53);
  for (int trial = 0; trial < 25; ++trial) {
    auto x = rand_signed<float>({2, 3, 4, 4}, rng);
    auto k = rand_signed<float>({3, 3, 3, 3}, rng);
    auto m = rand_signed<float>({6, 8}, rng);
    auto w = rand_signed<float>({8, 5}, rng);
    // TRIDEC_CHECK_FINITE_OPS also scans inside the risky ops
    for (float v : conv2d(x, k, 1, 1).values()) REQUIRE(std::isfinite(v));
    for (float v : maxpool2d(x, 2, 2).values()) REQUIRE(std::isfinite(v));
    for (float v : matmul(m, w).values()) REQUIRE(std::isfinite(v));
    for (float v : log(square(m)).values()) REQUIRE(std::isfinite(v));
    for (float v : reciprocal(scalar_add(square(m), 1.0f)).values()) REQUIRE(std::isfinite(v));
  }
}
