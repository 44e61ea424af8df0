#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "dsc/common.hpp"
#include "dsc/tensor.hpp"

// Layer forward/backward passes. Every forward optionally fills a cache with
// exactly what its backward needs; backwards return gradients w.r.t. the
// layer input and all parameters. The analytic forms here are verified
// against finite differences in the test suite.
//
// Conventions, fixed across the library:
//   - feature maps are (H, W, C) row-major, channels last
//   - conv kernels are 3x3, stride 1, zero "same" padding,
//     weight layout (3, 3, Cin, Cout), one bias per output channel
//   - pooling is 2x2 max with stride 2; upsampling is 2x nearest neighbor

namespace dsc {

// ---------------------------------------------------------------------------
// initialization

/// Uniform in +-sqrt(6 / (fan_in + fan_out)); zero biases are set by callers.
template <class T>
void glorot_fill(Tensor<T>& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = static_cast<T>(rng.uniform(-bound, bound));
  }
}

// ---------------------------------------------------------------------------
// conv2d

template <class T>
struct Conv2d {
  Tensor<T> weight;  // (3, 3, Cin, Cout)
  Tensor<T> bias;    // (Cout)

  std::size_t in_channels() const { return weight.extent(2); }
  std::size_t out_channels() const { return weight.extent(3); }
};

template <class T>
Conv2d<T> make_conv2d(std::size_t cin, std::size_t cout, Rng& rng) {
  Conv2d<T> c;
  c.weight = Tensor<T>({3, 3, cin, cout});
  c.bias = Tensor<T>({cout});
  glorot_fill(c.weight, 9 * cin, 9 * cout, rng);
  return c;
}

template <class T>
Conv2d<T> conv2d_zeros_like(const Conv2d<T>& p) {
  return Conv2d<T>{Tensor<T>(p.weight.shape()), Tensor<T>(p.bias.shape())};
}

/// Cross-correlation with per-output-channel bias; spatial extent preserved.
template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& in, const Conv2d<T>& p,
                         Tensor<T>* saved_input = nullptr) {
  if (in.rank() != 3) throw DimensionError("conv2d: input must be (H, W, C)");
  const std::size_t h = in.extent(0), w = in.extent(1), cin = in.extent(2);
  const std::size_t cout = p.out_channels();
  if (cin != p.in_channels()) {
    throw DimensionError("conv2d: input has " + std::to_string(cin) +
                         " channels, kernel expects " + std::to_string(p.in_channels()));
  }
  Tensor<T> out({h, w, cout});
  const T* pin = in.data();
  const T* pw = p.weight.data();
  const T* pb = p.bias.data();
  T* po = out.data();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      T* acc = po + (y * w + x) * cout;
      for (std::size_t co = 0; co < cout; ++co) acc[co] = pb[co];
      for (std::size_t ky = 0; ky < 3; ++ky) {
        const std::size_t iy = y + ky;
        if (iy < 1 || iy > h) continue;  // zero padding row
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const std::size_t ix = x + kx;
          if (ix < 1 || ix > w) continue;
          const T* src = pin + ((iy - 1) * w + (ix - 1)) * cin;
          const T* wbase = pw + (ky * 3 + kx) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const T a = src[ci];
            const T* wrow = wbase + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) {
              acc[co] += a * wrow[co];
            }
          }
        }
      }
    }
  }
  ensure_finite(out, "conv2d");
  if (saved_input) *saved_input = in;
  return out;
}

template <class T>
struct Conv2dGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <class T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& saved_input, const Conv2d<T>& p,
                               const Tensor<T>& upstream) {
  const std::size_t h = saved_input.extent(0), w = saved_input.extent(1);
  const std::size_t cin = saved_input.extent(2), cout = p.out_channels();
  if (upstream.rank() != 3 || upstream.extent(0) != h || upstream.extent(1) != w ||
      upstream.extent(2) != cout) {
    throw DimensionError("conv2d backward: upstream shape mismatch");
  }
  Conv2dGrads<T> g{Tensor<T>(saved_input.shape()), Tensor<T>(p.weight.shape()),
                   Tensor<T>(p.bias.shape())};
  const T* pin = saved_input.data();
  const T* pw = p.weight.data();
  const T* pu = upstream.data();
  T* gin = g.input.data();
  T* gw = g.weight.data();
  T* gb = g.bias.data();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const T* up = pu + (y * w + x) * cout;
      for (std::size_t co = 0; co < cout; ++co) gb[co] += up[co];
      for (std::size_t ky = 0; ky < 3; ++ky) {
        const std::size_t iy = y + ky;
        if (iy < 1 || iy > h) continue;
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const std::size_t ix = x + kx;
          if (ix < 1 || ix > w) continue;
          const std::size_t src = ((iy - 1) * w + (ix - 1)) * cin;
          const std::size_t wofs = (ky * 3 + kx) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const T a = pin[src + ci];
            const T* wrow = pw + wofs + ci * cout;
            T* gwrow = gw + wofs + ci * cout;
            T dot = T{};
            for (std::size_t co = 0; co < cout; ++co) {
              gwrow[co] += a * up[co];
              dot += wrow[co] * up[co];
            }
            gin[src + ci] += dot;
          }
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// maxpool2d

template <class T>
struct PoolCache {
  std::vector<std::size_t> shape;    // input (H, W, C)
  std::vector<std::uint32_t> argmax; // flat input index per output element
};

/// 2x2/stride-2 max; both spatial extents must be even. Ties go to the first
/// element in row-major scan order of the window so backward is deterministic.
template <class T>
Tensor<T> maxpool2d_forward(const Tensor<T>& in, PoolCache<T>* cache = nullptr) {
  if (in.rank() != 3) throw DimensionError("maxpool2d: input must be (H, W, C)");
  const std::size_t h = in.extent(0), w = in.extent(1), c = in.extent(2);
  if (h % 2 != 0 || w % 2 != 0) {
    throw DimensionError("maxpool2d: spatial extents must be even, got " +
                         detail::shape_str(in.shape()));
  }
  Tensor<T> out({h / 2, w / 2, c});
  if (cache) {
    cache->shape = in.shape();
    cache->argmax.assign(out.size(), 0);
  }
  const T* pin = in.data();
  T* po = out.data();
  for (std::size_t oy = 0; oy < h / 2; ++oy) {
    for (std::size_t ox = 0; ox < w / 2; ++ox) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::size_t best = ((2 * oy) * w + 2 * ox) * c + ch;
        T val = pin[best];
        const std::size_t cand[3] = {((2 * oy) * w + 2 * ox + 1) * c + ch,
                                     ((2 * oy + 1) * w + 2 * ox) * c + ch,
                                     ((2 * oy + 1) * w + 2 * ox + 1) * c + ch};
        for (std::size_t k = 0; k < 3; ++k) {
          if (pin[cand[k]] > val) {
            val = pin[cand[k]];
            best = cand[k];
          }
        }
        const std::size_t o = (oy * (w / 2) + ox) * c + ch;
        po[o] = val;
        if (cache) cache->argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return out;
}

/// Routes each upstream gradient to its argmax position, zero elsewhere.
template <class T>
Tensor<T> maxpool2d_backward(const PoolCache<T>& cache, const Tensor<T>& upstream) {
  if (upstream.size() != cache.argmax.size()) {
    throw DimensionError("maxpool2d backward: upstream size mismatch");
  }
  Tensor<T> grad(cache.shape);
  for (std::size_t o = 0; o < upstream.size(); ++o) {
    grad[cache.argmax[o]] += upstream[o];
  }
  return grad;
}

// ---------------------------------------------------------------------------
// upsample2d

/// Nearest-neighbor 2x replication.
template <class T>
Tensor<T> upsample2d_forward(const Tensor<T>& in) {
  if (in.rank() != 3) throw DimensionError("upsample2d: input must be (H, W, C)");
  const std::size_t h = in.extent(0), w = in.extent(1), c = in.extent(2);
  Tensor<T> out({2 * h, 2 * w, c});
  const T* pin = in.data();
  T* po = out.data();
  for (std::size_t y = 0; y < 2 * h; ++y) {
    for (std::size_t x = 0; x < 2 * w; ++x) {
      const T* src = pin + ((y / 2) * w + (x / 2)) * c;
      T* dst = po + (y * 2 * w + x) * c;
      for (std::size_t ch = 0; ch < c; ++ch) dst[ch] = src[ch];
    }
  }
  return out;
}

/// Adjoint of replication: each input cell collects its 2x2 block.
template <class T>
Tensor<T> upsample2d_backward(const Tensor<T>& upstream) {
  if (upstream.rank() != 3) throw DimensionError("upsample2d backward: bad rank");
  const std::size_t h2 = upstream.extent(0), w2 = upstream.extent(1), c = upstream.extent(2);
  if (h2 % 2 != 0 || w2 % 2 != 0) {
    throw DimensionError("upsample2d backward: upstream extents must be even");
  }
  Tensor<T> grad({h2 / 2, w2 / 2, c});
  const T* pu = upstream.data();
  T* pg = grad.data();
  for (std::size_t y = 0; y < h2; ++y) {
    for (std::size_t x = 0; x < w2; ++x) {
      const T* src = pu + (y * w2 + x) * c;
      T* dst = pg + ((y / 2) * (w2 / 2) + (x / 2)) * c;
      for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// dense

template <class T>
struct Dense {
  Tensor<T> weight;  // (dout, din)
  Tensor<T> bias;    // (dout)

  std::size_t in_size() const { return weight.extent(1); }
  std::size_t out_size() const { return weight.extent(0); }
};

template <class T>
Dense<T> make_dense(std::size_t din, std::size_t dout, Rng& rng) {
  Dense<T> d;
  d.weight = Tensor<T>({dout, din});
  d.bias = Tensor<T>({dout});
  glorot_fill(d.weight, din, dout, rng);
  return d;
}

template <class T>
Dense<T> dense_zeros_like(const Dense<T>& p) {
  return Dense<T>{Tensor<T>(p.weight.shape()), Tensor<T>(p.bias.shape())};
}

/// Affine map W x + b on a rank-1 input.
template <class T>
Tensor<T> dense_forward(const Tensor<T>& in, const Dense<T>& p,
                        Tensor<T>* saved_input = nullptr) {
  if (in.rank() != 1 || in.size() != p.in_size()) {
    throw DimensionError("dense: input length " + std::to_string(in.size()) +
                         " does not match weight columns " + std::to_string(p.in_size()));
  }
  const std::size_t din = p.in_size(), dout = p.out_size();
  Tensor<T> out({dout});
  const T* px = in.data();
  const T* pw = p.weight.data();
  for (std::size_t o = 0; o < dout; ++o) {
    const T* wrow = pw + o * din;
    T acc = p.bias[o];
    for (std::size_t i = 0; i < din; ++i) acc += wrow[i] * px[i];
    out[o] = acc;
  }
  ensure_finite(out, "dense");
  if (saved_input) *saved_input = in;
  return out;
}

template <class T>
struct DenseGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <class T>
DenseGrads<T> dense_backward(const Tensor<T>& saved_input, const Dense<T>& p,
                             const Tensor<T>& upstream) {
  const std::size_t din = p.in_size(), dout = p.out_size();
  if (upstream.size() != dout) throw DimensionError("dense backward: upstream mismatch");
  DenseGrads<T> g{Tensor<T>({din}), Tensor<T>(p.weight.shape()), upstream};
  const T* px = saved_input.data();
  const T* pw = p.weight.data();
  T* gx = g.input.data();
  T* gw = g.weight.data();
  for (std::size_t o = 0; o < dout; ++o) {
    const T u = upstream[o];
    const T* wrow = pw + o * din;
    T* gwrow = gw + o * din;
    for (std::size_t i = 0; i < din; ++i) {
      gwrow[i] = u * px[i];
      gx[i] += u * wrow[i];
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// activations

enum class Act { relu, sigmoid, tanh };

template <class T>
T sigmoid_scalar(T x) {
  if (x >= T{0}) {
    return T{1} / (T{1} + std::exp(-x));
  }
  const T e = std::exp(x);
  return e / (T{1} + e);
}

/// Pointwise activation; the cache is the output itself, from which every
/// supported derivative can be recovered.
template <class T>
Tensor<T> activation_forward(Act kind, const Tensor<T>& in,
                             Tensor<T>* saved_output = nullptr) {
  Tensor<T> out(in.shape());
  switch (kind) {
    case Act::relu:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T{0} ? in[i] : T{0};
      break;
    case Act::sigmoid:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = sigmoid_scalar(in[i]);
      break;
    case Act::tanh:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::tanh(in[i]);
      break;
  }
  ensure_finite(out, "activation");
  if (saved_output) *saved_output = out;
  return out;
}

template <class T>
Tensor<T> activation_backward(Act kind, const Tensor<T>& saved_output,
                              const Tensor<T>& upstream) {
  if (!saved_output.same_shape(upstream)) {
    throw DimensionError("activation backward: shape mismatch");
  }
  Tensor<T> grad(upstream.shape());
  switch (kind) {
    case Act::relu:
      for (std::size_t i = 0; i < grad.size(); ++i) {
        grad[i] = saved_output[i] > T{0} ? upstream[i] : T{0};
      }
      break;
    case Act::sigmoid:
      for (std::size_t i = 0; i < grad.size(); ++i) {
        const T s = saved_output[i];
        grad[i] = upstream[i] * s * (T{1} - s);
      }
      break;
    case Act::tanh:
      for (std::size_t i = 0; i < grad.size(); ++i) {
        const T t = saved_output[i];
        grad[i] = upstream[i] * (T{1} - t * t);
      }
      break;
  }
  return grad;
}

// ---------------------------------------------------------------------------
// lstm

/// Single-layer LSTM. Gate blocks are packed in the order
/// input, forget, candidate, output; the forget-gate bias starts at 1.
template <class T>
struct Lstm {
  Tensor<T> wx;  // (4m, din)
  Tensor<T> wh;  // (4m, m)
  Tensor<T> b;   // (4m)

  std::size_t hidden() const { return wh.extent(1); }
  std::size_t input_size() const { return wx.extent(1); }
};

template <class T>
Lstm<T> make_lstm(std::size_t din, std::size_t m, Rng& rng) {
  Lstm<T> l;
  l.wx = Tensor<T>({4 * m, din});
  l.wh = Tensor<T>({4 * m, m});
  l.b = Tensor<T>({4 * m});
  glorot_fill(l.wx, din, m, rng);
  glorot_fill(l.wh, m, m, rng);
  for (std::size_t i = m; i < 2 * m; ++i) l.b[i] = T{1};  // forget gate
  return l;
}

template <class T>
Lstm<T> lstm_zeros_like(const Lstm<T>& p) {
  return Lstm<T>{Tensor<T>(p.wx.shape()), Tensor<T>(p.wh.shape()), Tensor<T>(p.b.shape())};
}

template <class T>
struct LstmCache {
  Tensor<T> seq;                 // (S, din)
  std::vector<Tensor<T>> gates;  // per step, post-activation (4m)
  std::vector<Tensor<T>> h;      // h[0..S], h[0] = 0
  std::vector<Tensor<T>> c;      // c[0..S], c[0] = 0
};

/// Runs the recurrence from zero initial state and returns the final hidden
/// state h_S, which the encoder uses as the sequence embedding.
template <class T>
Tensor<T> lstm_forward(const Tensor<T>& seq, const Lstm<T>& p,
                       LstmCache<T>* cache = nullptr) {
  if (seq.rank() != 2) throw DimensionError("lstm: input must be (S, din)");
  const std::size_t steps = seq.extent(0), din = seq.extent(1), m = p.hidden();
  if (steps == 0) throw DimensionError("lstm: empty sequence");
  if (din != p.input_size()) {
    throw DimensionError("lstm: step size " + std::to_string(din) +
                         " does not match weights " + std::to_string(p.input_size()));
  }
  Tensor<T> h({m});
  Tensor<T> c({m});
  if (cache) {
    cache->seq = seq;
    cache->gates.clear();
    cache->h.assign(1, h);
    cache->c.assign(1, c);
  }
  Tensor<T> z({4 * m});
  const T* pwx = p.wx.data();
  const T* pwh = p.wh.data();
  for (std::size_t t = 0; t < steps; ++t) {
    const T* xt = seq.data() + t * din;
    for (std::size_t r = 0; r < 4 * m; ++r) {
      const T* wxr = pwx + r * din;
      T acc = p.b[r];
      for (std::size_t i = 0; i < din; ++i) acc += wxr[i] * xt[i];
      const T* whr = pwh + r * m;
      for (std::size_t i = 0; i < m; ++i) acc += whr[i] * h[i];
      z[r] = acc;
    }
    Tensor<T> gates({4 * m});
    Tensor<T> c_next({m});
    Tensor<T> h_next({m});
    for (std::size_t i = 0; i < m; ++i) {
      const T gi = sigmoid_scalar(z[i]);
      const T gf = sigmoid_scalar(z[m + i]);
      const T gg = std::tanh(z[2 * m + i]);
      const T go = sigmoid_scalar(z[3 * m + i]);
      gates[i] = gi;
      gates[m + i] = gf;
      gates[2 * m + i] = gg;
      gates[3 * m + i] = go;
      c_next[i] = gf * c[i] + gi * gg;
      h_next[i] = go * std::tanh(c_next[i]);
    }
    h = std::move(h_next);
    c = std::move(c_next);
    if (cache) {
      cache->gates.push_back(std::move(gates));
      cache->h.push_back(h);
      cache->c.push_back(c);
    }
  }
  ensure_finite(h, "lstm");
  return h;
}

template <class T>
struct LstmGrads {
  Tensor<T> seq;  // (S, din)
  Tensor<T> wx;
  Tensor<T> wh;
  Tensor<T> b;
};

/// Backpropagation through time from an upstream gradient on h_S.
template <class T>
LstmGrads<T> lstm_backward(const LstmCache<T>& cache, const Lstm<T>& p,
                           const Tensor<T>& d_h_final) {
  const std::size_t steps = cache.seq.extent(0), din = cache.seq.extent(1);
  const std::size_t m = p.hidden();
  if (d_h_final.size() != m) throw DimensionError("lstm backward: upstream mismatch");
  LstmGrads<T> g{Tensor<T>(cache.seq.shape()), Tensor<T>(p.wx.shape()),
                 Tensor<T>(p.wh.shape()), Tensor<T>(p.b.shape())};
  Tensor<T> dh = d_h_final;
  Tensor<T> dc({m});
  Tensor<T> dz({4 * m});
  const T* pwx = p.wx.data();
  const T* pwh = p.wh.data();
  for (std::size_t t = steps; t-- > 0;) {
    const Tensor<T>& gates = cache.gates[t];
    const Tensor<T>& c_prev = cache.c[t];
    const Tensor<T>& c_cur = cache.c[t + 1];
    const Tensor<T>& h_prev = cache.h[t];
    const T* xt = cache.seq.data() + t * din;
    for (std::size_t i = 0; i < m; ++i) {
      const T gi = gates[i], gf = gates[m + i], gg = gates[2 * m + i], go = gates[3 * m + i];
      const T tc = std::tanh(c_cur[i]);
      const T d_o = dh[i] * tc;
      const T dct = dc[i] + dh[i] * go * (T{1} - tc * tc);
      const T d_i = dct * gg;
      const T d_g = dct * gi;
      const T d_f = dct * c_prev[i];
      dc[i] = dct * gf;
      dz[i] = d_i * gi * (T{1} - gi);
      dz[m + i] = d_f * gf * (T{1} - gf);
      dz[2 * m + i] = d_g * (T{1} - gg * gg);
      dz[3 * m + i] = d_o * go * (T{1} - go);
    }
    T* dxt = g.seq.data() + t * din;
    dh.fill(T{});
    for (std::size_t r = 0; r < 4 * m; ++r) {
      const T u = dz[r];
      g.b[r] += u;
      const T* wxr = pwx + r * din;
      T* gwxr = g.wx.data() + r * din;
      for (std::size_t i = 0; i < din; ++i) {
        gwxr[i] += u * xt[i];
        dxt[i] += u * wxr[i];
      }
      const T* whr = pwh + r * m;
      T* gwhr = g.wh.data() + r * m;
      for (std::size_t i = 0; i < m; ++i) {
        gwhr[i] += u * h_prev[i];
        dh[i] += u * whr[i];
      }
    }
  }
  return g;
}

}  // namespace dsc
