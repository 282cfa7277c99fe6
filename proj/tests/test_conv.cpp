#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "tridec/conv.hpp"

using namespace tridec;

TEST_CASE("conv2d of all-ones 3x3 with all-ones 3x3 kernel") {
  Tensor<float> x({1, 1, 3, 3}, 1.0f);
  Tensor<float> k({1, 1, 3, 3}, 1.0f);
  auto y = conv2d(x, k, 1, 1);
  REQUIRE(y.shape() == std::vector<int>{1, 1, 3, 3});
  CHECK(y.values()[4] == 9.0f);   // center sees the full window
  CHECK(y.values()[0] == 4.0f);   // corner sees a 2x2 window
  CHECK(y.values()[1] == 6.0f);   // edge sees a 2x3 window
}

TEST_CASE("conv2d with zero padding and stride 1 preserves spatial size") {
  Tensor<float> x({2, 1, 28, 28}, 0.5f);
  Tensor<float> k({4, 1, 3, 3}, 0.1f);
  auto y = conv2d(x, k, 1, 1);
  CHECK(y.shape() == std::vector<int>{2, 4, 28, 28});
}

TEST_CASE("conv2d validation") {
  Tensor<float> x({1, 2, 4, 4}, 1.0f);
  Tensor<float> k({1, 3, 3, 3}, 1.0f);
  CHECK_THROWS_AS(conv2d(x, k, 1, 1), ShapeError);       // channel mismatch
  Tensor<float> k2({1, 2, 3, 3}, 1.0f);
  CHECK_THROWS_AS(conv2d(x, k2, 0, 1), InvalidDimension);
  Tensor<float> big({1, 2, 7, 7}, 1.0f);
  CHECK_THROWS_AS(conv2d(x, big, 1, 0), ShapeError);     // kernel larger than input
}

TEST_CASE("maxpool2d forward fixture with ceil-mode clipping") {
  // 3x3 plane pooled by 2/2 -> 2x2, last windows clipped at the border
  Tensor<float> x({1, 1, 3, 3}, std::vector<float>{1, 2, 3,
                                                   4, 5, 6,
                                                   7, 8, 9});
  auto y = maxpool2d(x, 2, 2);
  REQUIRE(y.shape() == std::vector<int>{1, 1, 2, 2});
  CHECK(testutil::to_vec(y.values()) == std::vector<float>{5, 6, 8, 9});
}

TEST_CASE("maxpool2d routes gradient to the first maximal element on ties") {
  Tensor<float> x({1, 1, 2, 2}, std::vector<float>{7, 7, 7, 7}, true);
  Tape<float> tape;
  {
    Tape<float>::Scope scope(tape);
    auto loss = sum(maxpool2d(x, 2, 2));
    Tensor<float>* params[] = {&x};
    tape.backward(loss, params);
  }
  CHECK(testutil::to_vec(x.grad()) == std::vector<float>{1, 0, 0, 0});
}

TEST_CASE("transposed_conv2d stride-1 fixture scatters the kernel") {
  Tensor<float> x({1, 1, 1, 1}, std::vector<float>{2.0f});
  Rng rng(3);
  auto k = testutil::rand_tensor<float>({1, 1, 3, 3}, rng, -1, 1, false);
  auto y = transposed_conv2d(x, k, 1, 0, 0);
  REQUIRE(y.shape() == std::vector<int>{1, 1, 3, 3});
  for (int i = 0; i < 9; ++i) {
    CHECK(y.values()[static_cast<std::size_t>(i)] ==
          Catch::Approx(2.0f * k.values()[static_cast<std::size_t>(i)]));
  }
}

TEST_CASE("transposed convolution is the adjoint of convolution") {
  // <conv(x), y> == <x, tconv(y)> for the stride/pad pairs the networks use
  Rng rng(5);
  for (auto [stride, pad, h] : {std::tuple{2, 1, 7}, std::tuple{2, 1, 8}, std::tuple{1, 1, 5}}) {
    auto x = testutil::rand_tensor<double>({2, 3, h, h}, rng, -1, 1, false);
    auto k = testutil::rand_tensor<double>({4, 3, 3, 3}, rng, -1, 1, false);
    auto cx = conv2d(x, k, stride, pad);
    auto y = testutil::rand_tensor<double>(cx.shape(), rng, -1, 1, false);

    // kernel viewed from the transposed side: [OC x IC x kh x kw] -> swap roles
    const int out_pad_h = h - ((cx.dim(2) - 1) * stride - 2 * pad + 3);
    auto ty = transposed_conv2d(y, k, stride, pad, out_pad_h, out_pad_h);
    REQUIRE(ty.shape() == x.shape());

    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < cx.size(); ++i) lhs += cx.values()[i] * y.values()[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x.values()[i] * ty.values()[i];
    CHECK(lhs == Catch::Approx(rhs).epsilon(1e-10));
  }
}

TEST_CASE("conv followed by its transposed counterpart restores spatial shape") {
  Rng rng(9);
  for (int h : {28, 16, 8, 7, 5}) {
    auto x = testutil::rand_tensor<float>({1, 1, h, h}, rng, -1, 1, false);
    auto k = testutil::rand_tensor<float>({2, 1, 3, 3}, rng, -1, 1, false);
    auto pooled_like = conv2d(x, k, 2, 1);  // stride-2 conv halves like the pool path
    const int ph = pooled_like.dim(2);
    auto kt = testutil::rand_tensor<float>({2, 1, 3, 3}, rng, -1, 1, false);
    const int out_pad = h - ((ph - 1) * 2 - 2 + 3);
    auto back = transposed_conv2d(pooled_like, kt, 2, 1, out_pad, out_pad);
    CHECK(back.dim(2) == h);
    CHECK(back.dim(3) == h);
  }
}

TEST_CASE("maxpool ceil sizes match the encoder halving sequence") {
  auto size_after = [](int h) {
    Tensor<float> x({1, 1, h, h}, 1.0f);
    return maxpool2d(x, 2, 2).dim(2);
  };
  CHECK(size_after(28) == 14);
  CHECK(size_after(14) == 7);
  CHECK(size_after(7) == 4);
  CHECK(size_after(4) == 2);
  CHECK(size_after(2) == 1);
  CHECK(size_after(1) == 1);
  CHECK(size_after(5) == 3);
}

TEST_CASE("transposed_conv2d validation") {
  Tensor<float> x({1, 2, 3, 3}, 1.0f);
  Tensor<float> k({2, 1, 3, 3}, 1.0f);
  CHECK_THROWS_AS(transposed_conv2d(x, k, 2, 1, 2), InvalidDimension);  // out_pad >= stride
  Tensor<float> kbad({3, 1, 3, 3}, 1.0f);
  CHECK_THROWS_AS(transposed_conv2d(x, kbad, 2, 1, 0), ShapeError);
}
