#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "dsc/common.hpp"
#include "dsc/nn.hpp"
#include "dsc/tensor.hpp"

// Assembles the four architecture variants (CNN / CNN-LSTM, encoder-only /
// autoencoder) and exposes encode, decode and the reconstruction loss.
//
// Encoder: replicate-pad the (L, W, n) field to (G, G, n), then three
// conv+relu+maxpool stages down to (G/8, G/8, Ctop). LSTM variants read that
// map as a sequence of G/8 rows and keep the final hidden state as the
// embedding; CNN-only variants flatten and project with a dense layer.
// Decoder mirrors the ladder with upsample+conv stages, sigmoid on the last
// conv so outputs stay in [0, 1], and a center crop back to (L, W, n).

namespace dsc {

enum class Variant { cnn_enc, cnn_ae, cnn_lstm_enc, cnn_lstm_ae };

inline bool is_autoencoder(Variant v) {
  return v == Variant::cnn_ae || v == Variant::cnn_lstm_ae;
}

inline bool uses_lstm(Variant v) {
  return v == Variant::cnn_lstm_enc || v == Variant::cnn_lstm_ae;
}

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::cnn_enc: return "cnn-enc";
    case Variant::cnn_ae: return "cnn-ae";
    case Variant::cnn_lstm_enc: return "cnn-lstm-enc";
    case Variant::cnn_lstm_ae: return "cnn-lstm-ae";
  }
  return "?";
}

inline Variant parse_variant(const std::string& name) {
  if (name == "cnn-enc") return Variant::cnn_enc;
  if (name == "cnn-ae") return Variant::cnn_ae;
  if (name == "cnn-lstm-enc") return Variant::cnn_lstm_enc;
  if (name == "cnn-lstm-ae") return Variant::cnn_lstm_ae;
  throw ConfigError("unknown variant: " + name);
}

struct ModelDims {
  std::size_t rows = 0;  // L
  std::size_t cols = 0;  // W
  std::size_t vars = 0;  // n
};

template <class T>
struct Model {
  Variant variant = Variant::cnn_lstm_ae;
  ModelDims dims;
  std::size_t padded = 0;  // G: smallest multiple of 8 covering both extents
  std::size_t latent = 0;  // m
  std::vector<std::size_t> channels;  // encoder ladder after the input, e.g. 32,64,128

  std::vector<Conv2d<T>> enc_conv;   // one per ladder stage
  std::optional<Lstm<T>> lstm;       // lstm variants
  std::optional<Dense<T>> enc_head;  // cnn-only variants: flatten -> m
  std::optional<Dense<T>> dec_head;  // autoencoders: m -> g*g*Ctop
  std::vector<Conv2d<T>> dec_conv;   // mirrored ladder down to n channels

  std::size_t grid_after_pool() const { return padded >> channels.size(); }

  std::size_t param_count() const {
    std::size_t n = 0;
    const_cast<Model*>(this)->for_each_param(
        [&n](const std::string&, Tensor<T>& t) { n += t.size(); });
    return n;
  }

  /// Visits every trainable tensor in topological order. The same order is
  /// used for gradients, optimizer state and checkpoints.
  template <class Fn>
  void for_each_param(Fn&& fn) {
    for (std::size_t i = 0; i < enc_conv.size(); ++i) {
      fn("encoder.conv" + std::to_string(i) + ".weight", enc_conv[i].weight);
      fn("encoder.conv" + std::to_string(i) + ".bias", enc_conv[i].bias);
    }
    if (lstm) {
      fn(std::string("encoder.lstm.wx"), lstm->wx);
      fn(std::string("encoder.lstm.wh"), lstm->wh);
      fn(std::string("encoder.lstm.b"), lstm->b);
    }
    if (enc_head) {
      fn(std::string("encoder.head.weight"), enc_head->weight);
      fn(std::string("encoder.head.bias"), enc_head->bias);
    }
    if (dec_head) {
      fn(std::string("decoder.head.weight"), dec_head->weight);
      fn(std::string("decoder.head.bias"), dec_head->bias);
    }
    for (std::size_t i = 0; i < dec_conv.size(); ++i) {
      fn("decoder.conv" + std::to_string(i) + ".weight", dec_conv[i].weight);
      fn("decoder.conv" + std::to_string(i) + ".bias", dec_conv[i].bias);
    }
  }
};

/// Gradient (or optimizer-state) container shaped exactly like the trainable
/// part of a Model.
template <class T>
struct ModelGrads {
  std::vector<Conv2d<T>> enc_conv;
  std::optional<Lstm<T>> lstm;
  std::optional<Dense<T>> enc_head;
  std::optional<Dense<T>> dec_head;
  std::vector<Conv2d<T>> dec_conv;

  template <class Fn>
  void for_each(Fn&& fn) {
    for (auto& c : enc_conv) {
      fn(c.weight);
      fn(c.bias);
    }
    if (lstm) {
      fn(lstm->wx);
      fn(lstm->wh);
      fn(lstm->b);
    }
    if (enc_head) {
      fn(enc_head->weight);
      fn(enc_head->bias);
    }
    if (dec_head) {
      fn(dec_head->weight);
      fn(dec_head->bias);
    }
    for (auto& c : dec_conv) {
      fn(c.weight);
      fn(c.bias);
    }
  }

  void zero() {
    for_each([](Tensor<T>& t) { t.fill(T{}); });
  }

  void add(ModelGrads& other) {
    std::vector<Tensor<T>*> mine, theirs;
    for_each([&mine](Tensor<T>& t) { mine.push_back(&t); });
    other.for_each([&theirs](Tensor<T>& t) { theirs.push_back(&t); });
    for (std::size_t i = 0; i < mine.size(); ++i) {
      T* a = mine[i]->data();
      const T* b = theirs[i]->data();
      for (std::size_t j = 0, n = mine[i]->size(); j < n; ++j) a[j] += b[j];
    }
  }
};

template <class T>
ModelGrads<T> make_grads(const Model<T>& m) {
  ModelGrads<T> g;
  for (const auto& c : m.enc_conv) g.enc_conv.push_back(conv2d_zeros_like(c));
  if (m.lstm) g.lstm = lstm_zeros_like(*m.lstm);
  if (m.enc_head) g.enc_head = dense_zeros_like(*m.enc_head);
  if (m.dec_head) g.dec_head = dense_zeros_like(*m.dec_head);
  for (const auto& c : m.dec_conv) g.dec_conv.push_back(conv2d_zeros_like(c));
  return g;
}

inline std::size_t padded_extent(std::size_t rows, std::size_t cols) {
  const std::size_t g = std::max(rows, cols);
  return (g + 7) / 8 * 8;
}

template <class T>
void validate_model(const Model<T>& m) {
  if (m.dims.rows == 0 || m.dims.cols == 0 || m.dims.vars == 0) {
    throw ConfigError("model dims must be positive");
  }
  if (m.channels.size() != 3) {
    throw ConfigError("conv ladder must have exactly 3 stages");
  }
  if (m.padded % 8 != 0 || m.padded < m.dims.rows || m.padded < m.dims.cols) {
    throw ConfigError("padded grid must cover the input and be divisible by 8");
  }
  if (m.latent == 0) throw ConfigError("latent dimension must be positive");
  if (is_autoencoder(m.variant) != (m.dec_head.has_value() && !m.dec_conv.empty())) {
    throw ConfigError("decoder presence does not match variant");
  }
  if (uses_lstm(m.variant) != m.lstm.has_value()) {
    throw ConfigError("lstm presence does not match variant");
  }
}

/// Builds a fully initialized model; deterministic for a given seed.
template <class T>
Model<T> build_model(Variant variant, ModelDims dims, std::uint64_t seed,
                     std::size_t latent = 256,
                     std::vector<std::size_t> channels = {32, 64, 128}) {
  if (dims.rows == 0 || dims.cols == 0 || dims.vars == 0) {
    throw ConfigError("model dims must be positive");
  }
  if (latent == 0) throw ConfigError("latent dimension must be positive");
  Model<T> m;
  m.variant = variant;
  m.dims = dims;
  m.latent = latent;
  m.channels = std::move(channels);
  m.padded = padded_extent(dims.rows, dims.cols);
  if (m.channels.size() != 3) {
    throw ConfigError("conv ladder must have exactly 3 stages");
  }
  for (std::size_t c : m.channels) {
    if (c == 0) throw ConfigError("conv channel counts must be positive");
  }
  Rng rng(seed);
  std::size_t cin = dims.vars;
  for (std::size_t c : m.channels) {
    m.enc_conv.push_back(make_conv2d<T>(cin, c, rng));
    cin = c;
  }
  const std::size_t g = m.grid_after_pool();
  const std::size_t ctop = m.channels.back();
  if (uses_lstm(variant)) {
    m.lstm = make_lstm<T>(g * ctop, latent, rng);
  } else {
    m.enc_head = make_dense<T>(g * g * ctop, latent, rng);
  }
  if (is_autoencoder(variant)) {
    m.dec_head = make_dense<T>(latent, g * g * ctop, rng);
    m.dec_conv.push_back(make_conv2d<T>(m.channels[2], m.channels[1], rng));
    m.dec_conv.push_back(make_conv2d<T>(m.channels[1], m.channels[0], rng));
    m.dec_conv.push_back(make_conv2d<T>(m.channels[0], dims.vars, rng));
  }
  validate_model(m);
  return m;
}

// ---------------------------------------------------------------------------
// padding / cropping

/// Replicate-edge pad of (H, W, C) up to (G, G, C), centered. Edge replication
/// avoids introducing artificial zero boundaries into normalized fields.
template <class T>
Tensor<T> pad_replicate(const Tensor<T>& in, std::size_t g) {
  const std::size_t h = in.extent(0), w = in.extent(1), c = in.extent(2);
  if (g < h || g < w) throw DimensionError("pad_replicate: target smaller than input");
  const std::size_t top = (g - h) / 2, left = (g - w) / 2;
  Tensor<T> out({g, g, c});
  for (std::size_t y = 0; y < g; ++y) {
    const std::size_t sy = std::min(h - 1, y >= top ? y - top : 0);
    for (std::size_t x = 0; x < g; ++x) {
      const std::size_t sx = std::min(w - 1, x >= left ? x - left : 0);
      const T* src = in.data() + (sy * w + sx) * c;
      T* dst = out.data() + (y * g + x) * c;
      for (std::size_t ch = 0; ch < c; ++ch) dst[ch] = src[ch];
    }
  }
  return out;
}

/// Adjoint of pad_replicate: folds gradients of replicated cells back onto
/// their source cells.
template <class T>
Tensor<T> pad_replicate_backward(const Tensor<T>& upstream, std::size_t h, std::size_t w) {
  const std::size_t g = upstream.extent(0), c = upstream.extent(2);
  const std::size_t top = (g - h) / 2, left = (g - w) / 2;
  Tensor<T> grad({h, w, c});
  for (std::size_t y = 0; y < g; ++y) {
    const std::size_t sy = std::min(h - 1, y >= top ? y - top : 0);
    for (std::size_t x = 0; x < g; ++x) {
      const std::size_t sx = std::min(w - 1, x >= left ? x - left : 0);
      const T* src = upstream.data() + (y * g + x) * c;
      T* dst = grad.data() + (sy * w + sx) * c;
      for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
    }
  }
  return grad;
}

/// Centered (H, W) window of a (G, G, C) map; inverse of pad_replicate's
/// placement so padding-then-cropping is lossless.
template <class T>
Tensor<T> crop_center(const Tensor<T>& in, std::size_t h, std::size_t w) {
  const std::size_t g = in.extent(0), c = in.extent(2);
  if (g < h || g < w) throw DimensionError("crop_center: window larger than input");
  const std::size_t top = (g - h) / 2, left = (g - w) / 2;
  Tensor<T> out({h, w, c});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const T* src = in.data() + ((y + top) * g + (x + left)) * c;
      T* dst = out.data() + (y * w + x) * c;
      for (std::size_t ch = 0; ch < c; ++ch) dst[ch] = src[ch];
    }
  }
  return out;
}

template <class T>
Tensor<T> crop_center_backward(const Tensor<T>& upstream, std::size_t g) {
  const std::size_t h = upstream.extent(0), w = upstream.extent(1), c = upstream.extent(2);
  const std::size_t top = (g - h) / 2, left = (g - w) / 2;
  Tensor<T> grad({g, g, c});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const T* src = upstream.data() + (y * w + x) * c;
      T* dst = grad.data() + ((y + top) * g + (x + left)) * c;
      for (std::size_t ch = 0; ch < c; ++ch) dst[ch] = src[ch];
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// encode

template <class T>
struct EncodeCache {
  std::vector<Tensor<T>> conv_in;   // input to each conv stage
  std::vector<Tensor<T>> act_out;   // post-relu output per stage
  std::vector<PoolCache<T>> pool;   // argmax bookkeeping per stage
  LstmCache<T> lstm;
  Tensor<T> head_in;                // flattened features (cnn-only)
  Tensor<T> head_act;               // post-relu embedding (cnn-only)
};

/// Maps one observation (L, W, n) to its latent embedding of length m.
template <class T>
Tensor<T> encode(const Model<T>& model, const Tensor<T>& v, EncodeCache<T>* cache = nullptr) {
  if (v.rank() != 3 || v.extent(0) != model.dims.rows || v.extent(1) != model.dims.cols ||
      v.extent(2) != model.dims.vars) {
    throw DimensionError("encode: observation shape does not match model dims");
  }
  if (cache) {
    cache->conv_in.clear();
    cache->act_out.clear();
    cache->pool.clear();
    cache->pool.resize(model.enc_conv.size());
  }
  Tensor<T> x = pad_replicate(v, model.padded);
  for (std::size_t i = 0; i < model.enc_conv.size(); ++i) {
    if (cache) cache->conv_in.push_back(x);
    x = conv2d_forward(x, model.enc_conv[i]);
    x = activation_forward(Act::relu, x, cache ? &cache->act_out.emplace_back() : nullptr);
    x = maxpool2d_forward(x, cache ? &cache->pool[i] : nullptr);
  }
  const std::size_t g = model.grid_after_pool();
  const std::size_t ctop = model.channels.back();
  if (model.lstm) {
    // Rows of the top feature map become the sequence: g steps of g*ctop.
    Tensor<T> seq = x.reshaped({g, g * ctop});
    return lstm_forward(seq, *model.lstm, cache ? &cache->lstm : nullptr);
  }
  Tensor<T> flat = x.reshaped({g * g * ctop});
  Tensor<T> e = dense_forward(flat, *model.enc_head, cache ? &cache->head_in : nullptr);
  return activation_forward(Act::relu, e, cache ? &cache->head_act : nullptr);
}

/// Accumulates parameter gradients for one sample into `grads` given the
/// upstream gradient on the embedding. Optionally returns the gradient
/// w.r.t. the raw (unpadded) observation.
template <class T>
void encode_backward(const Model<T>& model, const EncodeCache<T>& cache,
                     const Tensor<T>& d_embedding, ModelGrads<T>& grads,
                     Tensor<T>* d_input = nullptr) {
  const std::size_t g = model.grid_after_pool();
  const std::size_t ctop = model.channels.back();
  Tensor<T> dx;
  if (model.lstm) {
    LstmGrads<T> lg = lstm_backward(cache.lstm, *model.lstm, d_embedding);
    grads.lstm->wx.accumulate(lg.wx);
    grads.lstm->wh.accumulate(lg.wh);
    grads.lstm->b.accumulate(lg.b);
    dx = lg.seq.reshaped({g, g, ctop});
  } else {
    Tensor<T> de = activation_backward(Act::relu, cache.head_act, d_embedding);
    DenseGrads<T> dg = dense_backward(cache.head_in, *model.enc_head, de);
    grads.enc_head->weight.accumulate(dg.weight);
    grads.enc_head->bias.accumulate(dg.bias);
    dx = dg.input.reshaped({g, g, ctop});
  }
  for (std::size_t i = model.enc_conv.size(); i-- > 0;) {
    dx = maxpool2d_backward(cache.pool[i], dx);
    dx = activation_backward(Act::relu, cache.act_out[i], dx);
    Conv2dGrads<T> cg = conv2d_backward(cache.conv_in[i], model.enc_conv[i], dx);
    grads.enc_conv[i].weight.accumulate(cg.weight);
    grads.enc_conv[i].bias.accumulate(cg.bias);
    dx = std::move(cg.input);
  }
  if (d_input) {
    *d_input = pad_replicate_backward(dx, model.dims.rows, model.dims.cols);
  }
}

// ---------------------------------------------------------------------------
// decode

template <class T>
struct DecodeCache {
  Tensor<T> head_in;   // embedding
  Tensor<T> head_act;  // post-relu head output
  std::vector<Tensor<T>> conv_in;
  std::vector<Tensor<T>> act_out;  // post-activation output per stage
};

/// Reconstructs an observation from an embedding; autoencoder variants only.
template <class T>
Tensor<T> decode(const Model<T>& model, const Tensor<T>& embedding,
                 DecodeCache<T>* cache = nullptr) {
  if (!is_autoencoder(model.variant)) {
    throw VariantError(std::string("decode: variant ") + variant_name(model.variant) +
                       " has no decoder");
  }
  if (embedding.size() != model.latent) {
    throw DimensionError("decode: embedding length does not match latent dim");
  }
  if (cache) {
    cache->conv_in.clear();
    cache->act_out.clear();
  }
  const std::size_t g = model.grid_after_pool();
  const std::size_t ctop = model.channels.back();
  Tensor<T> h = dense_forward(embedding, *model.dec_head, cache ? &cache->head_in : nullptr);
  h = activation_forward(Act::relu, h, cache ? &cache->head_act : nullptr);
  Tensor<T> x = h.reshaped({g, g, ctop});
  for (std::size_t i = 0; i < model.dec_conv.size(); ++i) {
    x = upsample2d_forward(x);
    if (cache) cache->conv_in.push_back(x);
    x = conv2d_forward(x, model.dec_conv[i]);
    const Act act = (i + 1 == model.dec_conv.size()) ? Act::sigmoid : Act::relu;
    x = activation_forward(act, x, cache ? &cache->act_out.emplace_back() : nullptr);
  }
  return crop_center(x, model.dims.rows, model.dims.cols);
}

/// Accumulates decoder parameter gradients for one sample and returns the
/// gradient w.r.t. the embedding.
template <class T>
Tensor<T> decode_backward(const Model<T>& model, const DecodeCache<T>& cache,
                          const Tensor<T>& d_recon, ModelGrads<T>& grads) {
  const std::size_t g = model.grid_after_pool();
  const std::size_t ctop = model.channels.back();
  Tensor<T> dx = crop_center_backward(d_recon, model.padded);
  for (std::size_t i = model.dec_conv.size(); i-- > 0;) {
    const Act act = (i + 1 == model.dec_conv.size()) ? Act::sigmoid : Act::relu;
    dx = activation_backward(act, cache.act_out[i], dx);
    Conv2dGrads<T> cg = conv2d_backward(cache.conv_in[i], model.dec_conv[i], dx);
    grads.dec_conv[i].weight.accumulate(cg.weight);
    grads.dec_conv[i].bias.accumulate(cg.bias);
    dx = upsample2d_backward(cg.input);
  }
  Tensor<T> dh = activation_backward(Act::relu, cache.head_act, dx.reshaped({g * g * ctop}));
  DenseGrads<T> dg = dense_backward(cache.head_in, *model.dec_head, dh);
  grads.dec_head->weight.accumulate(dg.weight);
  grads.dec_head->bias.accumulate(dg.bias);
  return dg.input;
}

// ---------------------------------------------------------------------------
// reconstruction loss

/// Mean over samples of the squared L2 distance over all entries.
template <class T>
T reconstruction_loss(const std::vector<Tensor<T>>& batch,
                      const std::vector<Tensor<T>>& recon) {
  if (batch.size() != recon.size() || batch.empty()) {
    throw DimensionError("reconstruction_loss: batch sizes differ or empty");
  }
  double total = 0.0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    if (!batch[s].same_shape(recon[s])) {
      throw DimensionError("reconstruction_loss: sample shape mismatch");
    }
    for (std::size_t i = 0; i < batch[s].size(); ++i) {
      const double d = static_cast<double>(recon[s][i]) - static_cast<double>(batch[s][i]);
      total += d * d;
    }
  }
  const T loss = static_cast<T>(total / static_cast<double>(batch.size()));
  if (!std::isfinite(loss)) throw NumericError("reconstruction_loss: non-finite");
  return loss;
}

/// d loss / d recon for one sample: 2 (recon - target) / batch_count.
template <class T>
Tensor<T> reconstruction_loss_grad(const Tensor<T>& target, const Tensor<T>& recon,
                                   std::size_t batch_count) {
  if (!target.same_shape(recon)) {
    throw DimensionError("reconstruction_loss_grad: shape mismatch");
  }
  Tensor<T> g(recon.shape());
  const T s = T{2} / static_cast<T>(batch_count);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = s * (recon[i] - target[i]);
  }
  return g;
}

}  // namespace dsc
