#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dsc/cluster.hpp"
#include "dsc/gradcheck.hpp"
#include "helpers.hpp"

using namespace dsc;
using test::random_tensor;

namespace {

Tensor<double> random_stochastic(std::size_t n, std::size_t k, Rng& rng) {
  Tensor<double> q({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      q(i, j) = rng.uniform(0.05, 1.0);
      sum += q(i, j);
    }
    for (std::size_t j = 0; j < k; ++j) q(i, j) /= sum;
  }
  return q;
}

}  // namespace

TEST_CASE("init_centroids recovers the two 1-D groups") {
  const auto emb = Tensor<double>::from({4, 1}, {0, 1, 10, 11});
  const auto c = init_centroids(emb, 2, 8, 42);
  REQUIRE(c.extent(0) == 2);
  const double lo = std::min(c(0, std::size_t{0}), c(1, std::size_t{0}));
  const double hi = std::max(c(0, std::size_t{0}), c(1, std::size_t{0}));
  CHECK(lo == 0.5);
  CHECK(hi == 10.5);
}

TEST_CASE("init_centroids with k = T-1 stays inside the data hull") {
  Rng rng(1);
  const auto emb = random_tensor({6, 2}, rng, -3.0, 3.0);
  const auto c = init_centroids(emb, 5, 4, 7);
  double lo = emb[0], hi = emb[0];
  for (std::size_t i = 0; i < emb.size(); ++i) {
    lo = std::min(lo, emb[i]);
    hi = std::max(hi, emb[i]);
  }
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(c[i] >= lo);
    CHECK(c[i] <= hi);
  }
}

TEST_CASE("init_centroids is deterministic and validates input") {
  Rng rng(3);
  const auto emb = random_tensor({9, 4}, rng);
  const auto a = init_centroids(emb, 3, 5, 11);
  const auto b = init_centroids(emb, 3, 5, 11);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  CHECK_THROWS_AS(init_centroids(emb, 9, 5, 11), ConfigError);
  CHECK_THROWS_AS(init_centroids(emb, 1, 5, 11), ConfigError);
  Tensor<double> same({5, 3});
  same.fill(2.0);
  CHECK_THROWS_AS(init_centroids(same, 2, 5, 11), DegenerateDataError);
}

TEST_CASE("soft_assign hand fixtures") {
  SECTION("equidistant point splits evenly") {
    const auto emb = Tensor<double>::from({1, 1}, {1.0});
    const auto cent = Tensor<double>::from({2, 1}, {0.0, 2.0});
    const auto q = soft_assign(emb, cent, 1.0);
    CHECK(q(0, std::size_t{0}) == Catch::Approx(0.5).margin(1e-12));
    CHECK(q(0, std::size_t{1}) == Catch::Approx(0.5).margin(1e-12));
  }
  SECTION("alpha 1, centroids 0 and 2, point at 0") {
    const auto emb = Tensor<double>::from({1, 1}, {0.0});
    const auto cent = Tensor<double>::from({2, 1}, {0.0, 2.0});
    const auto q = soft_assign(emb, cent, 1.0);
    CHECK(q(0, std::size_t{0}) == Catch::Approx(5.0 / 6.0).margin(1e-12));
    CHECK(q(0, std::size_t{1}) == Catch::Approx(1.0 / 6.0).margin(1e-12));
  }
  SECTION("assignment sharpens monotonically as the far centroid recedes") {
    const auto emb = Tensor<double>::from({1, 1}, {0.0});
    double prev = 0.0;
    for (double far : {2.0, 4.0, 8.0, 16.0, 64.0}) {
      const auto cent = Tensor<double>::from({2, 1}, {0.0, far});
      const auto q = soft_assign(emb, cent, 1.0);
      CHECK(q(0, std::size_t{0}) > prev);
      prev = q(0, std::size_t{0});
    }
    CHECK(prev > 0.999);
  }
}

TEST_CASE("soft_assign rows sum to one and are translation-invariant") {
  Rng rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 2 + rng.below(8), k = 2 + rng.below(4), m = 1 + rng.below(6);
    const auto emb = random_tensor({n, m}, rng, -2.0, 2.0);
    const auto cent = random_tensor({k, m}, rng, -2.0, 2.0);
    const double alpha = rng.uniform(0.5, 3.0);
    const auto q = soft_assign(emb, cent, alpha);
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        CHECK(q(i, j) > 0.0);
        CHECK(q(i, j) < 1.0);
        sum += q(i, j);
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
    const auto shift = random_tensor({m}, rng, -5.0, 5.0);
    auto emb2 = emb;
    auto cent2 = cent;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < m; ++c) emb2(i, c) += shift[c];
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t c = 0; c < m; ++c) cent2(j, c) += shift[c];
    const auto q2 = soft_assign(emb2, cent2, alpha);
    for (std::size_t i = 0; i < q.size(); ++i) CHECK(std::abs(q[i] - q2[i]) <= 1e-12);
  }
}

TEST_CASE("target_distribution fixtures") {
  SECTION("single row: squaring and normalizing cancel") {
    const auto q = Tensor<double>::from({1, 3}, {0.2, 0.5, 0.3});
    const auto p = target_distribution(q);
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(p(std::size_t{0}, j) == Catch::Approx(q(std::size_t{0}, j)).margin(1e-12));
    }
  }
  SECTION("hand-evaluated 2x2 fixture") {
    const auto q = Tensor<double>::from({2, 2}, {0.9, 0.1, 0.6, 0.4});
    const auto p = target_distribution(q);
    CHECK(p(std::size_t{0}, std::size_t{0}) == Catch::Approx(0.9643).margin(1e-4));
    CHECK(p(std::size_t{0}, std::size_t{1}) == Catch::Approx(0.0357).margin(1e-4));
    CHECK(p(std::size_t{1}, std::size_t{0}) == Catch::Approx(0.4286).margin(1e-4));
    CHECK(p(std::size_t{1}, std::size_t{1}) == Catch::Approx(0.5714).margin(1e-4));
  }
  SECTION("uniform rows stay uniform") {
    Tensor<double> q({5, 4});
    q.fill(0.25);
    const auto p = target_distribution(q);
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(p[i] == Catch::Approx(0.25).margin(1e-12));
    }
  }
  SECTION("an all-zero column is floored, not divided by zero") {
    const auto q = Tensor<double>::from({2, 2}, {1.0, 0.0, 1.0, 0.0});
    std::vector<std::string> warnings;
    auto saved = warning_handler();
    warning_handler() = [&warnings](const std::string& msg) { warnings.push_back(msg); };
    const auto p = target_distribution(q);
    warning_handler() = saved;
    CHECK(p(std::size_t{0}, std::size_t{0}) == 1.0);
    REQUIRE_FALSE(warnings.empty());
  }
}

TEST_CASE("target_distribution rows sum to one on random inputs") {
  Rng rng(7);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 1 + rng.below(10), k = 2 + rng.below(5);
    const auto q = random_stochastic(n, k, rng);
    const auto p = target_distribution(q);
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) sum += p(i, j);
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("kl_loss fixtures and positivity") {
  SECTION("identical distributions give zero") {
    Rng rng(9);
    const auto q = random_stochastic(4, 3, rng);
    CHECK(kl_loss(q, q) == Catch::Approx(0.0).margin(1e-15));
  }
  SECTION("hand evaluation: ln 2") {
    const auto p = Tensor<double>::from({1, 2}, {1.0, 0.0});
    const auto q = Tensor<double>::from({1, 2}, {0.5, 0.5});
    CHECK(kl_loss(p, q) == Catch::Approx(std::log(2.0)).margin(1e-12));
  }
  SECTION("non-negative on 100 random stochastic pairs") {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 1 + rng.below(6), k = 2 + rng.below(5);
      const auto p = random_stochastic(n, k, rng);
      const auto q = random_stochastic(n, k, rng);
      CHECK(kl_loss(p, q) >= -1e-14);
    }
  }
  SECTION("zero q under positive p is an error") {
    const auto p = Tensor<double>::from({1, 2}, {1.0, 0.0});
    const auto q = Tensor<double>::from({1, 2}, {0.0, 1.0});
    CHECK_THROWS_AS(kl_loss(p, q), NumericError);
  }
}

TEST_CASE("kl_gradients vanish at the self-consistent point") {
  Rng rng(13);
  const auto emb = random_tensor({5, 3}, rng);
  const auto cent = random_tensor({2, 3}, rng);
  const auto q = soft_assign(emb, cent, 1.0);
  const auto g = kl_gradients(q, q, emb, cent, 1.0);
  for (std::size_t i = 0; i < g.embeddings.size(); ++i) {
    CHECK(std::abs(g.embeddings[i]) < 1e-10);
  }
  for (std::size_t i = 0; i < g.centroids.size(); ++i) {
    CHECK(std::abs(g.centroids[i]) < 1e-10);
  }
}

TEST_CASE("kl_gradients match finite differences") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(6), k = 2 + rng.below(3), m = 1 + rng.below(4);
    const double alpha = trial % 3 == 0 ? rng.uniform(0.5, 3.0) : 1.0;
    const auto emb = random_tensor({n, m}, rng, -2.0, 2.0);
    const auto cent = random_tensor({k, m}, rng, -2.0, 2.0);
    const auto p = random_stochastic(n, k, rng);
    const auto q = soft_assign(emb, cent, alpha);
    const auto g = kl_gradients(p, q, emb, cent, alpha);
    const auto fd_emb = finite_diff_grad(
        [&](const Tensor<double>& e) { return kl_loss(p, soft_assign(e, cent, alpha)); },
        emb);
    CHECK(max_relative_error(g.embeddings, fd_emb) < 1e-4);
    const auto fd_cent = finite_diff_grad(
        [&](const Tensor<double>& c) { return kl_loss(p, soft_assign(emb, c, alpha)); },
        cent);
    CHECK(max_relative_error(g.centroids, fd_cent) < 1e-4);
  }
}

TEST_CASE("kl_gradients mirror under a mirrored configuration") {
  const auto emb = Tensor<double>::from({2, 1}, {-1.0, 1.0});
  const auto cent = Tensor<double>::from({2, 1}, {-2.0, 2.0});
  const auto q = soft_assign(emb, cent, 1.0);
  const auto p = target_distribution(q);
  const auto g = kl_gradients(p, q, emb, cent, 1.0);
  CHECK(g.centroids(std::size_t{0}, std::size_t{0}) ==
        Catch::Approx(-g.centroids(std::size_t{1}, std::size_t{0})).margin(1e-12));
  CHECK(g.embeddings(std::size_t{0}, std::size_t{0}) ==
        Catch::Approx(-g.embeddings(std::size_t{1}, std::size_t{0})).margin(1e-12));
}

TEST_CASE("hard_assign picks the argmax with low-index ties") {
  const auto q = Tensor<double>::from({3, 3},
                                      {0.2, 0.7, 0.1,
                                       0.5, 0.5, 0.0,
                                       0.1, 0.1, 0.8});
  const auto labels = hard_assign(q);
  CHECK(labels == std::vector<int>{1, 0, 2});
}

TEST_CASE("hard_assign is invariant under monotone row rescaling") {
  Rng rng(19);
  const auto q = random_stochastic(8, 4, rng);
  auto scaled = q;
  for (std::size_t i = 0; i < 8; ++i) {
    const double s = rng.uniform(0.5, 4.0);
    for (std::size_t j = 0; j < 4; ++j) scaled(i, j) = q(i, j) * s + 0.01;
  }
  CHECK(hard_assign(q) == hard_assign(scaled));
}

TEST_CASE("hard_assign permutes with the data order") {
  Rng rng(21);
  const auto q = random_stochastic(6, 3, rng);
  Tensor<double> reversed({6, 3});
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 3; ++j) reversed(5 - i, j) = q(i, j);
  }
  const auto a = hard_assign(q);
  const auto b = hard_assign(reversed);
  for (std::size_t i = 0; i < 6; ++i) CHECK(a[i] == b[5 - i]);
}

TEST_CASE("converged stopping rule") {
  const std::vector<int> a{0, 1, 2}, b{0, 1, 1};
  SECTION("six identical epochs with patience 5") {
    std::vector<std::vector<int>> history(6, a);
    CHECK(converged(history, 5));
  }
  SECTION("a flip in the last epoch resets") {
    std::vector<std::vector<int>> history(6, a);
    history.push_back(b);
    CHECK_FALSE(converged(history, 5));
  }
  SECTION("patience 0 needs two identical consecutive epochs") {
    CHECK_FALSE(converged({a}, 0));
    CHECK(converged({a, a}, 0));
    CHECK_FALSE(converged({a, b}, 0));
    CHECK(converged({b, a, a}, 0));
  }
  SECTION("not enough history yet") {
    CHECK_FALSE(converged(std::vector<std::vector<int>>(5, a), 5));
  }
}
