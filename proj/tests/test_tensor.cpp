#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dsc/gradcheck.hpp"
#include "dsc/tensor.hpp"
#include "helpers.hpp"

using namespace dsc;

TEST_CASE("row-major indexing round-trips") {
  Tensor<double> t({2, 3, 4});
  double v = 0.0;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 4; ++k) t(i, j, k) = v++;
  // flat index of (i,j,k) is i*12 + j*4 + k
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 4; ++k)
        CHECK(t[i * 12 + j * 4 + k] == t(i, j, k));
}

TEST_CASE("tensor shape validation") {
  CHECK_THROWS_AS(Tensor<double>({2, 0, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor<double>(std::vector<std::size_t>{}), DimensionError);
  CHECK_THROWS_AS(Tensor<double>::from({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  CHECK_THROWS_AS(Tensor<double>({2, 2}).reshaped({3, 2}), DimensionError);
}

TEST_CASE("matmul identity") {
  const auto eye = Tensor<double>::from({2, 2}, {1, 0, 0, 1});
  const auto a = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
  const auto out = matmul(eye, a);
  CHECK(out[0] == 1.0);
  CHECK(out[1] == 2.0);
  CHECK(out[2] == 3.0);
  CHECK(out[3] == 4.0);
}

TEST_CASE("matmul hand evaluation") {
  const auto a = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
  const auto b = Tensor<double>::from({2, 2}, {5, 6, 7, 8});
  const auto out = matmul(a, b);
  CHECK(out(0, 0) == 19.0);
  CHECK(out(0, 1) == 22.0);
  CHECK(out(1, 0) == 43.0);
  CHECK(out(1, 1) == 50.0);
}

TEST_CASE("matmul dimension mismatch") {
  Tensor<double> a({2, 3}), b({4, 2});
  CHECK_THROWS_AS(matmul(a, b), DimensionError);
  CHECK_THROWS_AS(matmul(a, Tensor<double>({3})), DimensionError);
}

TEST_CASE("matmul associativity on random chains") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = test::random_tensor({4, 5}, rng);
    const auto b = test::random_tensor({5, 6}, rng);
    const auto c = test::random_tensor({6, 3}, rng);
    const auto left = matmul(matmul(a, b), c);
    const auto right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.size(); ++i) {
      CHECK(std::abs(left[i] - right[i]) < 1e-10);
    }
  }
}

TEST_CASE("elementwise ops") {
  const auto a = Tensor<double>::from({2}, {1, 2});
  SECTION("add with zero") {
    const auto out = add(a, Tensor<double>::from({2}, {0, 0}));
    CHECK(out[0] == 1.0);
    CHECK(out[1] == 2.0);
  }
  SECTION("scale") {
    const auto out = scale(a, 2.0);
    CHECK(out[0] == 2.0);
    CHECK(out[1] == 4.0);
  }
  SECTION("mul hand evaluation") {
    const auto out = mul(a, Tensor<double>::from({2}, {3, 4}));
    CHECK(out[0] == 3.0);
    CHECK(out[1] == 8.0);
  }
  SECTION("shape mismatch") {
    CHECK_THROWS_AS(add(a, Tensor<double>({3})), DimensionError);
  }
  SECTION("sub") {
    const auto out = sub(a, a);
    CHECK(out[0] == 0.0);
  }
  SECTION("map") {
    const auto out = map(a, [](double x) { return x * x; });
    CHECK(out[1] == 4.0);
  }
}

TEST_CASE("non-finite results are hard errors") {
  const auto a = Tensor<double>::from({2}, {1e308, 1.0});
  CHECK_THROWS_AS(add(a, a), NumericError);
  CHECK_THROWS_AS(map(a, [](double) { return std::nan(""); }), NumericError);
}

TEST_CASE("finite_diff_grad of square function") {
  const auto x = Tensor<double>::from({1}, {3.0});
  const auto g = finite_diff_grad([](const Tensor<double>& t) { return t[0] * t[0]; }, x);
  CHECK(std::abs(g[0] - 6.0) < 1e-6);
}

TEST_CASE("finite_diff_grad of sum is all-ones") {
  Rng rng(3);
  const auto x = test::random_tensor({7}, rng);
  const auto g = finite_diff_grad(
      [](const Tensor<double>& t) {
        double s = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) s += t[i];
        return s;
      },
      x);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(g[i] - 1.0) < 1e-9);
}

TEST_CASE("finite_diff_grad of a linear function is constant in eps") {
  Rng rng(11);
  const auto coef = test::random_tensor({5}, rng);
  const auto x = test::random_tensor({5}, rng);
  auto f = [&coef](const Tensor<double>& t) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) s += coef[i] * t[i];
    return s;
  };
  const auto g4 = finite_diff_grad(f, x, 1e-4);
  const auto g5 = finite_diff_grad(f, x, 1e-5);
  const auto g6 = finite_diff_grad(f, x, 1e-6);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(std::abs(g4[i] - g5[i]) < 1e-7);
    CHECK(std::abs(g5[i] - g6[i]) < 1e-7);
  }
}

TEST_CASE("finite_diff_grad rejects non-finite functions") {
  const auto x = Tensor<double>::from({1}, {0.0});
  CHECK_THROWS_AS(
      finite_diff_grad([](const Tensor<double>& t) { return std::log(t[0]); }, x),
      NumericError);
}
