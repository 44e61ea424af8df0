#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "dsc/cluster.hpp"
#include "dsc/common.hpp"
#include "dsc/data_io.hpp"
#include "dsc/model.hpp"
#include "dsc/tensor.hpp"

// Joint optimization of network weights and cluster centroids by SGD with
// momentum, minimizing clustering loss plus (for autoencoder variants)
// reconstruction loss. The self-training target P is recomputed once per
// epoch from the full-dataset soft assignments and held fixed for that
// epoch's minibatches, since its column sums are dataset-level quantities.
// Training stops when hard assignments have been unchanged for `patience`
// consecutive epochs, or at max_epochs.

namespace dsc {

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 300;
  std::size_t patience = 5;
  std::size_t k = 7;
  std::size_t kmeans_restarts = 20;
  std::uint64_t seed = 0;
  double weight_clus = 1.0;
  double weight_rec = 1.0;
  double alpha = 1.0;
  unsigned threads = 0;  // 0 = all hardware threads

  void validate(std::size_t samples) const {
    if (!(learning_rate >= 0.0) || !(momentum >= 0.0) || momentum >= 1.0) {
      throw ConfigError("train: need learning_rate >= 0 and 0 <= momentum < 1");
    }
    if (batch_size < 1 || batch_size > samples) {
      throw ConfigError("train: need 1 <= batch_size <= T");
    }
    if (k < 2 || k >= samples) {
      throw ConfigError("train: need 2 <= k < T");
    }
    if (max_epochs < 1 || kmeans_restarts < 1) {
      throw ConfigError("train: max_epochs and kmeans_restarts must be >= 1");
    }
    if (!(weight_clus >= 0.0) || !(weight_rec >= 0.0) || !(alpha > 0.0)) {
      throw ConfigError("train: loss weights must be >= 0 and alpha > 0");
    }
  }
};

struct EpochStats {
  double l_rec = 0.0;
  double l_clus = 0.0;
  double l = 0.0;
  std::size_t changed_labels = 0;
};

enum class StopReason { converged, max_epochs };

inline const char* stop_reason_name(StopReason r) {
  return r == StopReason::converged ? "converged" : "max_epochs";
}

template <class T>
struct TrainResult {
  Model<T> model;
  ClusterState<T> state;
  Tensor<T> embeddings;  // final (T, m)
  std::vector<EpochStats> trace;
  std::size_t epochs = 0;
  StopReason stop = StopReason::max_epochs;
};

/// One momentum step: v <- mu v - lr g; p <- p + v.
template <class T>
void sgd_momentum_step(Tensor<T>& params, const Tensor<T>& grads, Tensor<T>& velocity,
                       double lr, double mu, const char* name = "param") {
  if (!params.same_shape(grads) || !params.same_shape(velocity)) {
    throw DimensionError(std::string("sgd_momentum_step: shape mismatch for ") + name);
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError(std::string("sgd_momentum_step: non-finite gradient in ") + name);
    }
  }
  T* p = params.data();
  const T* g = grads.data();
  T* v = velocity.data();
  const T flr = static_cast<T>(lr), fmu = static_cast<T>(mu);
  for (std::size_t i = 0; i < params.size(); ++i) {
    v[i] = fmu * v[i] - flr * g[i];
    p[i] += v[i];
  }
}

namespace detail {

template <class T>
std::vector<Tensor<T>> cube_samples(const DatasetCube& cube) {
  std::vector<Tensor<T>> samples;
  samples.reserve(cube.timesteps());
  for (std::size_t t = 0; t < cube.timesteps(); ++t) {
    if constexpr (std::is_same_v<T, float>) {
      samples.push_back(cube.timestep(t));
    } else {
      samples.push_back(cube.timestep(t).template cast<T>());
    }
  }
  return samples;
}

template <class T>
Tensor<T> encode_all(const Model<T>& model, const std::vector<Tensor<T>>& samples,
                     unsigned threads) {
  Tensor<T> emb({samples.size(), model.latent});
  parallel_for(samples.size(), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const Tensor<T> e = encode(model, samples[i]);
      std::copy(e.data(), e.data() + e.size(), emb.data() + i * model.latent);
    }
  });
  return emb;
}

}  // namespace detail

/// Full-dataset pass with no parameter mutation: reconstruction loss (zero
/// for encoder-only variants), clustering loss against the given target, and
/// the hard assignment of every sample. Also returns Q and the embeddings.
template <class T>
struct EpochEval {
  double l_rec = 0.0;
  double l_clus = 0.0;
  std::vector<int> labels;
  Tensor<T> soft;
  Tensor<T> embeddings;
};

template <class T>
EpochEval<T> evaluate_epoch(const Model<T>& model, const std::vector<Tensor<T>>& samples,
                            const Tensor<T>& centroids, const Tensor<T>& target, T alpha,
                            unsigned threads = 0) {
  EpochEval<T> ev;
  ev.embeddings = detail::encode_all(model, samples, threads);
  if (is_autoencoder(model.variant)) {
    std::vector<double> errs(samples.size(), 0.0);
    parallel_for(samples.size(), threads, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        Tensor<T> e({model.latent});
        std::copy(ev.embeddings.data() + i * model.latent,
                  ev.embeddings.data() + (i + 1) * model.latent, e.data());
        const Tensor<T> recon = decode(model, e);
        double acc = 0.0;
        for (std::size_t c = 0; c < recon.size(); ++c) {
          const double diff =
              static_cast<double>(recon[c]) - static_cast<double>(samples[i][c]);
          acc += diff * diff;
        }
        errs[i] = acc;
      }
    });
    double total = 0.0;
    for (double e : errs) total += e;  // fixed order, deterministic
    ev.l_rec = total / static_cast<double>(samples.size());
  }
  ev.soft = soft_assign(ev.embeddings, centroids, alpha);
  ev.l_clus = static_cast<double>(kl_loss(target, ev.soft));
  ev.labels = hard_assign(ev.soft);
  return ev;
}

/// Convenience overload matching the spec-level signature.
template <class T>
EpochEval<T> evaluate_epoch(const Model<T>& model, const DatasetCube& data,
                            const ClusterState<T>& state, unsigned threads = 0) {
  const auto samples = detail::cube_samples<T>(data);
  return evaluate_epoch(model, samples, state.centroids, state.target, state.alpha, threads);
}

template <class T>
TrainResult<T> train(Model<T> model, const DatasetCube& data, const TrainConfig& cfg) {
  const std::size_t n = data.timesteps();
  cfg.validate(n);
  const auto samples = detail::cube_samples<T>(data);
  const bool autoenc = is_autoencoder(model.variant);
  const T alpha = static_cast<T>(cfg.alpha);
  Rng rng(cfg.seed);
  const std::uint64_t kmeans_seed = rng.next_u64();

  // (1) initial embeddings and centroids from the untrained encoder
  Tensor<T> embeddings = detail::encode_all(model, samples, cfg.threads);
  Tensor<T> centroids = init_centroids(embeddings, cfg.k, cfg.kmeans_restarts, kmeans_seed);
  Tensor<T> q = soft_assign(embeddings, centroids, alpha);
  std::vector<std::vector<int>> history{hard_assign(q)};

  // optimizer state
  ModelGrads<T> velocity = make_grads(model);
  Tensor<T> centroid_velocity(centroids.shape());
  std::vector<ModelGrads<T>> slot_grads;  // per-sample slots, summed in order
  for (std::size_t s = 0; s < cfg.batch_size; ++s) {
    slot_grads.push_back(make_grads(model));
  }
  ModelGrads<T> total_grads = make_grads(model);
  Tensor<T> total_centroid_grads(centroids.shape());

  TrainResult<T> result;
  result.stop = StopReason::max_epochs;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  Tensor<T> target;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    // (2) refresh the self-training target from full-dataset Q, freeze it
    target = target_distribution(q);
    rng.shuffle(order);

    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t bsz = std::min(cfg.batch_size, n - start);
      Tensor<T> emb_batch({bsz, model.latent});
      Tensor<T> p_batch({bsz, static_cast<std::size_t>(cfg.k)});
      std::vector<EncodeCache<T>> enc_caches(bsz);
      std::vector<DecodeCache<T>> dec_caches(bsz);
      std::vector<Tensor<T>> recon(bsz);

      parallel_for(bsz, cfg.threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t b = lo; b < hi; ++b) {
          const std::size_t idx = order[start + b];
          const Tensor<T> e = encode(model, samples[idx], &enc_caches[b]);
          std::copy(e.data(), e.data() + e.size(), emb_batch.data() + b * model.latent);
          if (autoenc) recon[b] = decode(model, e, &dec_caches[b]);
          for (std::size_t j = 0; j < cfg.k; ++j) {
            p_batch(b, j) = target(order[start + b], j);
          }
        }
      });

      const Tensor<T> q_batch = soft_assign(emb_batch, centroids, alpha);
      const KlGrads<T> kg = kl_gradients(p_batch, q_batch, emb_batch, centroids, alpha);

      parallel_for(bsz, cfg.threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t b = lo; b < hi; ++b) {
          const std::size_t idx = order[start + b];
          slot_grads[b].zero();
          Tensor<T> d_emb({model.latent});
          for (std::size_t c = 0; c < model.latent; ++c) {
            d_emb[c] = static_cast<T>(cfg.weight_clus) * kg.embeddings(b, c);
          }
          if (autoenc) {
            Tensor<T> d_recon = reconstruction_loss_grad(samples[idx], recon[b], bsz);
            if (cfg.weight_rec != 1.0) {
              d_recon = scale(d_recon, static_cast<T>(cfg.weight_rec));
            }
            const Tensor<T> d_emb_rec = decode_backward(model, dec_caches[b], d_recon,
                                                        slot_grads[b]);
            d_emb.accumulate(d_emb_rec);
          }
          encode_backward(model, enc_caches[b], d_emb, slot_grads[b]);
        }
      });

      total_grads.zero();
      for (std::size_t b = 0; b < bsz; ++b) total_grads.add(slot_grads[b]);
      const Tensor<T> d_centroids = scale(kg.centroids, static_cast<T>(cfg.weight_clus));

      // apply the momentum step to network weights and centroids alike
      std::vector<Tensor<T>*> params, grads, vels;
      model.for_each_param([&params](const std::string&, Tensor<T>& t) { params.push_back(&t); });
      total_grads.for_each([&grads](Tensor<T>& t) { grads.push_back(&t); });
      velocity.for_each([&vels](Tensor<T>& t) { vels.push_back(&t); });
      for (std::size_t i = 0; i < params.size(); ++i) {
        sgd_momentum_step(*params[i], *grads[i], *vels[i], cfg.learning_rate, cfg.momentum);
      }
      sgd_momentum_step(centroids, d_centroids, centroid_velocity, cfg.learning_rate,
                        cfg.momentum, "centroids");
    }

    // (3) end of epoch: full pass, stats, stopping rule
    EpochEval<T> ev;
    try {
      ev = evaluate_epoch(model, samples, centroids, target, alpha, cfg.threads);
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + ": " + e.what());
    }
    std::size_t changed = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (ev.labels[i] != history.back()[i]) ++changed;
    }
    const double weighted = cfg.weight_clus * ev.l_clus + cfg.weight_rec * ev.l_rec;
    result.trace.push_back({ev.l_rec, ev.l_clus, weighted, changed});
    history.push_back(ev.labels);
    q = ev.soft;
    embeddings = std::move(ev.embeddings);
    result.epochs = epoch;
    if (converged(history, cfg.patience)) {
      result.stop = StopReason::converged;
      break;
    }
  }

  result.state = ClusterState<T>{std::move(centroids), std::move(q), std::move(target),
                                 history.back(), alpha};
  result.embeddings = std::move(embeddings);
  result.model = std::move(model);
  return result;
}

}  // namespace dsc
