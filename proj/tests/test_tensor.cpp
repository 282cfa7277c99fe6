#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "tridec/gradcheck.hpp"
#include "tridec/ops.hpp"

using namespace tridec;

TEST_CASE("tensor shape and value count stay consistent") {
  Tensor<float> t({2, 3}, 1.5f);
  CHECK(t.size() == 6);
  CHECK(t.shape() == std::vector<int>{2, 3});

  CHECK_THROWS_AS(Tensor<float>({2, 0}, 0.0f), InvalidDimension);
  CHECK_THROWS_AS(Tensor<float>({-1}, 0.0f), InvalidDimension);
  CHECK_THROWS_AS(Tensor<float>({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
}

TEST_CASE("mutating a tensor captured by a tape copies on write") {
  Tensor<float> x({3}, std::vector<float>{1, 2, 3}, true);
  Tape<float> tape;
  Tape<float>::Scope scope(tape);
  Tensor<float> y = square(x);  // backward closure captured x's buffer
  const float* before = x.values().data();
  x.mutable_values()[0] = 99.0f;
  CHECK(x.values().data() != before);
  CHECK(y.values()[0] == 1.0f);
}

TEST_CASE("gradient of sum of squares") {
  Tensor<float> x({3}, std::vector<float>{1, 2, 3}, true);
  Tape<float> tape;
  {
    Tape<float>::Scope scope(tape);
    Tensor<float> loss = sum(square(x));
    Tensor<float>* params[] = {&x};
    tape.backward(loss, params);
  }
  REQUIRE(x.has_grad());
  auto g = x.grad();
  CHECK(g[0] == Catch::Approx(2.0));
  CHECK(g[1] == Catch::Approx(4.0));
  CHECK(g[2] == Catch::Approx(6.0));
}

TEST_CASE("relu blocks gradient on negative inputs") {
  Tensor<float> x({1}, std::vector<float>{-5.0f}, true);
  Tape<float> tape;
  {
    Tape<float>::Scope scope(tape);
    Tensor<float> loss = sum(relu(x));
    Tensor<float>* params[] = {&x};
    tape.backward(loss, params);
  }
  CHECK(x.grad()[0] == 0.0f);
}

TEST_CASE("backward rejects non-scalar losses and consumed tapes") {
  Tensor<float> x({2}, std::vector<float>{1, 2}, true);
  Tape<float> tape;
  Tape<float>::Scope scope(tape);
  Tensor<float> y = square(x);
  CHECK_THROWS_AS(tape.backward(y), NonScalarLoss);

  Tensor<float> loss = sum(y);
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), TapeReuse);
}

TEST_CASE("parameters unreachable from the loss get zero gradients") {
  Tensor<float> used({2}, std::vector<float>{1, 2}, true);
  Tensor<float> unused({3}, std::vector<float>{4, 5, 6}, true);
  Tape<float> tape;
  {
    Tape<float>::Scope scope(tape);
    Tensor<float> loss = sum(square(used));
    Tensor<float>* params[] = {&used, &unused};
    tape.backward(loss, params);
  }
  REQUIRE(unused.has_grad());
  for (float g : unused.grad()) CHECK(g == 0.0f);
  CHECK(used.grad()[0] != 0.0f);
}

TEST_CASE("ops run un-recorded without an active tape") {
  Tensor<float> x({2}, std::vector<float>{1, 2}, true);
  Tensor<float> y = square(x);  // no tape: plain evaluation
  CHECK(y.values()[1] == 4.0f);
  Tape<float> tape;
  tape.backward(sum(y));  // loss not on tape: nothing to do
  CHECK(tape.grad_of(x) == std::vector<float>{0.0f, 0.0f});
}

TEST_CASE("reshape preserves data and rejects bad element counts") {
  Tensor<float> x({2, 3}, std::vector<float>{0, 1, 2, 3, 4, 5});
  Tensor<float> y = reshape(x, {3, 2});
  CHECK(y.values()[5] == 5.0f);
  CHECK_THROWS_AS(reshape(x, {4, 2}), ShapeError);
}

TEST_CASE("finite difference checker validates and flags gradients") {
  Rng rng(7);
  auto x = testutil::rand_tensor<double>({4}, rng, 0.5, 1.5);
  auto f = [&]() { return sum(square(x)); };
  Tensor<double>* params[] = {&x};

  const double err = finite_difference_check<double>(f, params, {.h = 1e-5});
  CHECK(err < 1e-8);

  // negative control: an injected analytic bug must be caught
  const double bugged = finite_difference_check<double>(f, params, {.h = 1e-5, .inject_bug = 0.05});
  CHECK(bugged > 1e-3);
}

TEST_CASE("finite difference of a constant function is zero error") {
  Tensor<double> x({2}, std::vector<double>{1, 2}, true);
  auto f = [&]() { return Tensor<double>::scalar(3.0); };
  Tensor<double>* params[] = {&x};
  CHECK(finite_difference_check<double>(f, params, {.h = 1e-4}) == 0.0);
}

TEST_CASE("finite difference rejects non-finite losses") {
  Tensor<double> x({1}, std::vector<double>{1}, true);
  auto f = [&]() { return Tensor<double>::scalar(std::numeric_limits<double>::quiet_NaN()); };
  Tensor<double>* params[] = {&x};
  CHECK_THROWS_AS(finite_difference_check<double>(f, params, {.h = 1e-4}), NonFiniteValue);
}
