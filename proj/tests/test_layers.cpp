#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dsc/gradcheck.hpp"
#include "dsc/nn.hpp"
#include "helpers.hpp"

using namespace dsc;
using test::nudge_from_zero;
using test::random_tensor;

namespace {

Conv2d<double> random_conv(std::size_t cin, std::size_t cout, Rng& rng) {
  Conv2d<double> c{random_tensor({3, 3, cin, cout}, rng), random_tensor({cout}, rng)};
  return c;
}

}  // namespace

TEST_CASE("conv2d identity kernel is the identity map") {
  Rng rng(5);
  for (std::size_t channels : {std::size_t{1}, std::size_t{3}}) {
    Conv2d<double> p{Tensor<double>({3, 3, channels, channels}),
                     Tensor<double>({channels})};
    for (std::size_t c = 0; c < channels; ++c) p.weight(1, 1, c, c) = 1.0;  // center tap
    const auto in = random_tensor({6, 5, channels}, rng);
    const auto out = conv2d_forward(in, p);
    REQUIRE(out.same_shape(in));
    for (std::size_t i = 0; i < in.size(); ++i) CHECK(out[i] == in[i]);
  }
}

TEST_CASE("conv2d all-ones kernel on all-ones input") {
  Conv2d<double> p{Tensor<double>({3, 3, 1, 1}), Tensor<double>({1})};
  p.weight.fill(1.0);
  Tensor<double> in({3, 3, 1});
  in.fill(1.0);
  const auto out = conv2d_forward(in, p);
  CHECK(out(1, 1, 0) == 9.0);   // full 3x3 support
  CHECK(out(0, 0, 0) == 4.0);   // corner sees a 2x2 window
  CHECK(out(2, 2, 0) == 4.0);
  CHECK(out(0, 1, 0) == 6.0);   // edge sees a 2x3 window
}

TEST_CASE("conv2d channel mismatch") {
  Rng rng(1);
  const auto p = random_conv(2, 3, rng);
  CHECK_THROWS_AS(conv2d_forward(Tensor<double>({4, 4, 5}), p), DimensionError);
}

TEST_CASE("conv2d backward matches finite differences") {
  Rng rng(17);
  const auto p = random_conv(2, 3, rng);
  const auto in = random_tensor({5, 5, 2}, rng);
  const auto upstream = random_tensor({5, 5, 3}, rng);
  Tensor<double> saved;
  conv2d_forward(in, p, &saved);
  const auto grads = conv2d_backward(saved, p, upstream);

  auto loss_of_input = [&](const Tensor<double>& x) {
    const auto out = conv2d_forward(x, p);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * upstream[i];
    return s;
  };
  CHECK(max_relative_error(grads.input, finite_diff_grad(loss_of_input, in)) < 1e-4);

  auto loss_of_weight = [&](const Tensor<double>& w) {
    Conv2d<double> q{w, p.bias};
    const auto out = conv2d_forward(in, q);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * upstream[i];
    return s;
  };
  CHECK(max_relative_error(grads.weight, finite_diff_grad(loss_of_weight, p.weight)) < 1e-4);

  auto loss_of_bias = [&](const Tensor<double>& b) {
    Conv2d<double> q{p.weight, b};
    const auto out = conv2d_forward(in, q);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * upstream[i];
    return s;
  };
  CHECK(max_relative_error(grads.bias, finite_diff_grad(loss_of_bias, p.bias)) < 1e-4);
}

TEST_CASE("maxpool2d forward and argmax routing") {
  const auto in = Tensor<double>::from({2, 2, 1}, {1, 2, 3, 4});
  PoolCache<double> cache;
  const auto out = maxpool2d_forward(in, &cache);
  REQUIRE(out.size() == 1);
  CHECK(out[0] == 4.0);
  const auto grad = maxpool2d_backward(cache, Tensor<double>::from({1, 1, 1}, {1.0}));
  CHECK(grad[0] == 0.0);
  CHECK(grad[1] == 0.0);
  CHECK(grad[2] == 0.0);
  CHECK(grad[3] == 1.0);
}

TEST_CASE("maxpool2d tie goes to first in scan order") {
  Tensor<double> in({2, 2, 1});
  in.fill(7.0);
  PoolCache<double> cache;
  maxpool2d_forward(in, &cache);
  CHECK(cache.argmax[0] == 0);
}

TEST_CASE("maxpool2d rejects odd extents") {
  CHECK_THROWS_AS(maxpool2d_forward(Tensor<double>({3, 4, 1})), DimensionError);
  CHECK_THROWS_AS(maxpool2d_forward(Tensor<double>({4, 5, 1})), DimensionError);
}

TEST_CASE("maxpool2d backward matches finite differences away from ties") {
  Rng rng(23);
  auto in = random_tensor({8, 8, 3}, rng);
  const auto upstream = random_tensor({4, 4, 3}, rng);
  PoolCache<double> cache;
  maxpool2d_forward(in, &cache);
  const auto grad = maxpool2d_backward(cache, upstream);
  auto loss = [&](const Tensor<double>& x) {
    const auto out = maxpool2d_forward(x);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * upstream[i];
    return s;
  };
  // uniform draws make exact ties measure-zero; seeds are fixed anyway
  CHECK(max_relative_error(grad, finite_diff_grad(loss, in)) < 1e-4);
}

TEST_CASE("upsample2d replicates blocks") {
  const auto in = Tensor<double>::from({2, 2, 1}, {1, 2, 3, 4});
  const auto out = upsample2d_forward(in);
  const double expect[16] = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  REQUIRE(out.size() == 16);
  for (std::size_t i = 0; i < 16; ++i) CHECK(out[i] == expect[i]);
}

TEST_CASE("upsample2d backward sums blocks") {
  Tensor<double> upstream({4, 4, 1});
  upstream.fill(1.0);
  const auto grad = upsample2d_backward(upstream);
  for (std::size_t i = 0; i < grad.size(); ++i) CHECK(grad[i] == 4.0);
}

TEST_CASE("upsample2d then 2x2 average pooling is the identity") {
  Rng rng(31);
  const auto in = random_tensor({4, 4, 2}, rng);
  const auto up = upsample2d_forward(in);
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t x = 0; x < 4; ++x) {
      for (std::size_t c = 0; c < 2; ++c) {
        const double mean = (up(2 * y, 2 * x, c) + up(2 * y, 2 * x + 1, c) +
                             up(2 * y + 1, 2 * x, c) + up(2 * y + 1, 2 * x + 1, c)) /
                            4.0;
        CHECK(mean == in(y, x, c));
      }
    }
  }
}

TEST_CASE("upsample2d gradient check") {
  Rng rng(37);
  const auto in = random_tensor({4, 4, 2}, rng);
  const auto upstream = random_tensor({8, 8, 2}, rng);
  const auto grad = upsample2d_backward(upstream);
  auto loss = [&](const Tensor<double>& x) {
    const auto out = upsample2d_forward(x);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * upstream[i];
    return s;
  };
  CHECK(max_relative_error(grad, finite_diff_grad(loss, in)) < 1e-4);
}

TEST_CASE("dense identity and hand evaluation") {
  Dense<double> eye{Tensor<double>::from({2, 2}, {1, 0, 0, 1}), Tensor<double>({2})};
  const auto x = Tensor<double>::from({2}, {5, -3});
  const auto out = dense_forward(x, eye);
  CHECK(out[0] == 5.0);
  CHECK(out[1] == -3.0);

  Dense<double> p{Tensor<double>::from({1, 2}, {1, 1}), Tensor<double>::from({1}, {1})};
  const auto y = dense_forward(Tensor<double>::from({2}, {2, 3}), p);
  CHECK(y[0] == 6.0);

  CHECK_THROWS_AS(dense_forward(Tensor<double>({3}), p), DimensionError);
}

TEST_CASE("dense backward matches finite differences") {
  Rng rng(41);
  Dense<double> p{random_tensor({8, 16}, rng), random_tensor({8}, rng)};
  const auto in = random_tensor({16}, rng);
  const auto upstream = random_tensor({8}, rng);
  Tensor<double> saved;
  dense_forward(in, p, &saved);
  const auto grads = dense_backward(saved, p, upstream);
  auto weigh = [&](const Tensor<double>& out) {
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * upstream[i];
    return s;
  };
  CHECK(max_relative_error(
            grads.input,
            finite_diff_grad([&](const Tensor<double>& x) { return weigh(dense_forward(x, p)); },
                             in)) < 1e-4);
  CHECK(max_relative_error(
            grads.weight,
            finite_diff_grad(
                [&](const Tensor<double>& w) {
                  return weigh(dense_forward(in, Dense<double>{w, p.bias}));
                },
                p.weight)) < 1e-4);
  CHECK(max_relative_error(
            grads.bias,
            finite_diff_grad(
                [&](const Tensor<double>& b) {
                  return weigh(dense_forward(in, Dense<double>{p.weight, b}));
                },
                p.bias)) < 1e-4);
}

TEST_CASE("activation values") {
  const auto relu = activation_forward(Act::relu, Tensor<double>::from({2}, {-1, 2}));
  CHECK(relu[0] == 0.0);
  CHECK(relu[1] == 2.0);
  const auto sig = activation_forward(Act::sigmoid, Tensor<double>::from({1}, {0.0}));
  CHECK(sig[0] == 0.5);
  const auto th = activation_forward(Act::tanh, Tensor<double>::from({1}, {0.0}));
  CHECK(th[0] == 0.0);
}

TEST_CASE("activation gradient checks") {
  Rng rng(43);
  const auto upstream = random_tensor({12}, rng);
  for (Act kind : {Act::relu, Act::sigmoid, Act::tanh}) {
    auto in = random_tensor({12}, rng, -2.0, 2.0);
    nudge_from_zero(in);
    Tensor<double> saved;
    activation_forward(kind, in, &saved);
    const auto grad = activation_backward(kind, saved, upstream);
    auto loss = [&](const Tensor<double>& x) {
      const auto out = activation_forward(kind, x);
      double s = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * upstream[i];
      return s;
    };
    CHECK(max_relative_error(grad, finite_diff_grad(loss, in)) < 1e-4);
  }
}

TEST_CASE("lstm with all-zero parameters yields a zero embedding") {
  Lstm<double> p{Tensor<double>({20, 4}), Tensor<double>({20, 5}), Tensor<double>({20})};
  Rng rng(47);
  const auto seq = random_tensor({3, 4}, rng);
  const auto h = lstm_forward(seq, p);
  for (std::size_t i = 0; i < h.size(); ++i) CHECK(h[i] == 0.0);
}

TEST_CASE("single-step lstm matches a standalone cell evaluation") {
  Rng rng(53);
  const std::size_t din = 3, m = 4;
  const auto p = make_lstm<double>(din, m, rng);
  const auto seq = random_tensor({1, din}, rng);
  const auto h = lstm_forward(seq, p);
  for (std::size_t i = 0; i < m; ++i) {
    double zi = p.b[i], zf = p.b[m + i], zg = p.b[2 * m + i], zo = p.b[3 * m + i];
    for (std::size_t j = 0; j < din; ++j) {
      zi += p.wx(i, j) * seq(std::size_t{0}, j);
      zf += p.wx(m + i, j) * seq(std::size_t{0}, j);
      zg += p.wx(2 * m + i, j) * seq(std::size_t{0}, j);
      zo += p.wx(3 * m + i, j) * seq(std::size_t{0}, j);
    }
    // h_prev = 0, c_prev = 0
    const double c = sigmoid_scalar(zi) * std::tanh(zg);
    const double expect = sigmoid_scalar(zo) * std::tanh(c);
    CHECK(std::abs(h[i] - expect) < 1e-12);
    (void)zf;
  }
}

TEST_CASE("lstm rejects empty sequences and size mismatches") {
  Rng rng(59);
  const auto p = make_lstm<double>(4, 5, rng);
  CHECK_THROWS_AS(lstm_forward(Tensor<double>({1, 3}), p), DimensionError);
  CHECK_THROWS_AS(lstm_forward(Tensor<double>({3}), p), DimensionError);
}

TEST_CASE("lstm backward matches finite differences on all weight blocks") {
  Rng rng(61);
  const std::size_t steps = 3, din = 4, m = 5;
  Lstm<double> p{random_tensor({4 * m, din}, rng, -0.5, 0.5),
                 random_tensor({4 * m, m}, rng, -0.5, 0.5),
                 random_tensor({4 * m}, rng, -0.5, 0.5)};
  const auto seq = random_tensor({steps, din}, rng);
  const auto upstream = random_tensor({m}, rng);
  LstmCache<double> cache;
  lstm_forward(seq, p, &cache);
  const auto grads = lstm_backward(cache, p, upstream);
  auto weigh = [&](const Tensor<double>& h) {
    double s = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) s += h[i] * upstream[i];
    return s;
  };
  CHECK(max_relative_error(
            grads.seq,
            finite_diff_grad(
                [&](const Tensor<double>& x) { return weigh(lstm_forward(x, p)); }, seq)) <
        1e-4);
  CHECK(max_relative_error(
            grads.wx,
            finite_diff_grad(
                [&](const Tensor<double>& wx) {
                  return weigh(lstm_forward(seq, Lstm<double>{wx, p.wh, p.b}));
                },
                p.wx)) < 1e-4);
  CHECK(max_relative_error(
            grads.wh,
            finite_diff_grad(
                [&](const Tensor<double>& wh) {
                  return weigh(lstm_forward(seq, Lstm<double>{p.wx, wh, p.b}));
                },
                p.wh)) < 1e-4);
  CHECK(max_relative_error(
            grads.b,
            finite_diff_grad(
                [&](const Tensor<double>& b) {
                  return weigh(lstm_forward(seq, Lstm<double>{p.wx, p.wh, b}));
                },
                p.b)) < 1e-4);
}

TEST_CASE("forward passes are deterministic") {
  Rng rng(67);
  const auto p = random_conv(2, 2, rng);
  const auto in = random_tensor({6, 6, 2}, rng);
  const auto a = conv2d_forward(in, p);
  const auto b = conv2d_forward(in, p);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("glorot initialization respects its bound and the forget-gate bias") {
  Rng rng(71);
  const auto lstm = make_lstm<double>(8, 6, rng);
  const double bound_x = std::sqrt(6.0 / (8 + 6));
  for (std::size_t i = 0; i < lstm.wx.size(); ++i) {
    CHECK(std::abs(lstm.wx[i]) <= bound_x);
  }
  for (std::size_t i = 0; i < 6; ++i) CHECK(lstm.b[i] == 0.0);          // input gate
  for (std::size_t i = 6; i < 12; ++i) CHECK(lstm.b[i] == 1.0);         // forget gate
  for (std::size_t i = 12; i < 24; ++i) CHECK(lstm.b[i] == 0.0);        // candidate, output
}
