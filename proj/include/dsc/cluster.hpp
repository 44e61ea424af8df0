#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dsc/baselines.hpp"
#include "dsc/common.hpp"
#include "dsc/tensor.hpp"

// The unsupervised clustering head: Student's-t soft assignments over latent
// embeddings, the sharpened self-training target, the KL clustering loss with
// its analytic gradients, hard assignment and the assignment-stability
// stopping rule.

namespace dsc {

/// Everything the clustering layer owns during training.
template <class T>
struct ClusterState {
  Tensor<T> centroids;      // (k, m)
  Tensor<T> soft;           // Q, (T, k): rows sum to 1
  Tensor<T> target;         // P, (T, k): rows sum to 1, frozen per epoch
  std::vector<int> labels;  // argmax per row of Q
  T alpha = T{1};           // Student's-t degrees of freedom
};

/// k-means (best of `restarts`) over embedding rows, used to seed centroids.
template <class T>
Tensor<T> init_centroids(const Tensor<T>& embeddings, std::size_t k,
                         std::size_t restarts, std::uint64_t seed) {
  if (embeddings.rank() != 2) {
    throw DimensionError("init_centroids: embeddings must be (T, m)");
  }
  const std::size_t n = embeddings.extent(0), m = embeddings.extent(1);
  if (k < 2 || k >= n) {
    throw ConfigError("init_centroids: need 2 <= k < T");
  }
  bool degenerate = true;
  for (std::size_t i = 1; i < n && degenerate; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (embeddings(i, j) != embeddings(std::size_t{0}, j)) {
        degenerate = false;
        break;
      }
    }
  }
  if (degenerate) {
    throw DegenerateDataError("init_centroids: all embeddings identical");
  }
  return kmeans_fit(embeddings, k, restarts, 100, seed).centroids;
}

/// Student's-t similarity, normalized per row:
/// q_ij = (1 + |E_i - C_j|^2 / a)^(-(a+1)/2), divided by its row sum.
template <class T>
Tensor<T> soft_assign(const Tensor<T>& embeddings, const Tensor<T>& centroids, T alpha) {
  if (embeddings.rank() != 2 || centroids.rank() != 2 ||
      embeddings.extent(1) != centroids.extent(1)) {
    throw DimensionError("soft_assign: embedding/centroid dims mismatch");
  }
  if (!(alpha > T{0})) throw ConfigError("soft_assign: alpha must be positive");
  const std::size_t n = embeddings.extent(0), k = centroids.extent(0);
  const std::size_t m = embeddings.extent(1);
  const double expo = -(static_cast<double>(alpha) + 1.0) / 2.0;
  Tensor<T> q({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    double rowsum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double d2 = detail::sq_dist_rows(embeddings.data() + i * m,
                                             centroids.data() + j * m, m);
      const double s = std::pow(1.0 + d2 / static_cast<double>(alpha), expo);
      q(i, j) = static_cast<T>(s);
      rowsum += s;
    }
    for (std::size_t j = 0; j < k; ++j) {
      q(i, j) = static_cast<T>(static_cast<double>(q(i, j)) / rowsum);
    }
  }
  ensure_finite(q, "soft_assign");
  return q;
}

/// Self-training target: p_ij = (q_ij^2 / f_j) row-normalized, with
/// f_j the soft cluster frequency. A column that has lost all mass is floored
/// at 1e-12 so the division cannot blow up.
template <class T>
Tensor<T> target_distribution(const Tensor<T>& q) {
  if (q.rank() != 2) throw DimensionError("target_distribution: Q must be (T, k)");
  const std::size_t n = q.extent(0), k = q.extent(1);
  std::vector<double> freq(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) freq[j] += static_cast<double>(q(i, j));
  }
  for (std::size_t j = 0; j < k; ++j) {
    if (freq[j] < 1e-12) {
      warn("target_distribution: cluster " + std::to_string(j) +
           " has (near) zero soft mass; flooring its frequency");
      freq[j] = 1e-12;
    }
  }
  Tensor<T> p({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    double rowsum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double qi = static_cast<double>(q(i, j));
      const double w = qi * qi / freq[j];
      p(i, j) = static_cast<T>(w);
      rowsum += w;
    }
    for (std::size_t j = 0; j < k; ++j) {
      p(i, j) = static_cast<T>(static_cast<double>(p(i, j)) / rowsum);
    }
  }
  ensure_finite(p, "target_distribution");
  return p;
}

/// KL(P || Q) averaged over rows, with 0 log 0 = 0.
template <class T>
T kl_loss(const Tensor<T>& p, const Tensor<T>& q) {
  if (!p.same_shape(q) || p.rank() != 2) {
    throw DimensionError("kl_loss: P and Q must be same-shape (T, k)");
  }
  const std::size_t n = p.extent(0), k = p.extent(1);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double pij = static_cast<double>(p(i, j));
      if (pij <= 0.0) continue;
      const double qij = static_cast<double>(q(i, j));
      if (qij <= 0.0) {
        throw NumericError("kl_loss: q is zero where p is positive");
      }
      total += pij * std::log(pij / qij);
    }
  }
  return static_cast<T>(total / static_cast<double>(n));
}

template <class T>
struct KlGrads {
  Tensor<T> embeddings;  // (T, m)
  Tensor<T> centroids;   // (k, m)
};

/// Analytic gradients of kl_loss(P, soft_assign(E, C, a)) with P held
/// constant (the self-training target). For each pair (i, j), with
/// w_ij = (1 + |E_i - C_j|^2 / a)^(-1):
///   dL/dE_i = (a+1)/(a T) * sum_j (p_ij - q_ij) w_ij (E_i - C_j)
///   dL/dC_j = -(a+1)/(a T) * sum_i (p_ij - q_ij) w_ij (E_i - C_j)
/// Both are verified against finite differences in the test suite.
template <class T>
KlGrads<T> kl_gradients(const Tensor<T>& p, const Tensor<T>& q,
                        const Tensor<T>& embeddings, const Tensor<T>& centroids,
                        T alpha) {
  if (!p.same_shape(q)) throw DimensionError("kl_gradients: P/Q shape mismatch");
  const std::size_t n = embeddings.extent(0), m = embeddings.extent(1);
  const std::size_t k = centroids.extent(0);
  if (p.extent(0) != n || p.extent(1) != k) {
    throw DimensionError("kl_gradients: P shape does not match E and C");
  }
  KlGrads<T> g{Tensor<T>({n, m}), Tensor<T>({k, m})};
  const double a = static_cast<double>(alpha);
  const double coef = (a + 1.0) / (a * static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const T* ei = embeddings.data() + i * m;
    T* gei = g.embeddings.data() + i * m;
    for (std::size_t j = 0; j < k; ++j) {
      const T* cj = centroids.data() + j * m;
      T* gcj = g.centroids.data() + j * m;
      const double d2 = detail::sq_dist_rows(ei, cj, m);
      const double w = 1.0 / (1.0 + d2 / a);
      const double s =
          coef * (static_cast<double>(p(i, j)) - static_cast<double>(q(i, j))) * w;
      for (std::size_t c = 0; c < m; ++c) {
        const double diff = static_cast<double>(ei[c]) - static_cast<double>(cj[c]);
        gei[c] += static_cast<T>(s * diff);
        gcj[c] -= static_cast<T>(s * diff);
      }
    }
  }
  return g;
}

/// argmax per row; ties go to the lowest cluster index.
template <class T>
std::vector<int> hard_assign(const Tensor<T>& q) {
  if (q.rank() != 2) throw DimensionError("hard_assign: Q must be (T, k)");
  const std::size_t n = q.extent(0), k = q.extent(1);
  std::vector<int> labels(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    T best = q(i, std::size_t{0});
    int arg = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (q(i, j) > best) {
        best = q(i, j);
        arg = static_cast<int>(j);
      }
    }
    labels[i] = arg;
  }
  return labels;
}

/// True when assignments have been stable long enough: the last
/// max(patience + 1, 2) label vectors are all identical.
inline bool converged(const std::vector<std::vector<int>>& history, std::size_t patience) {
  if (history.empty()) throw ConfigError("converged: empty history");
  const std::size_t need = std::max<std::size_t>(patience + 1, 2);
  if (history.size() < need) return false;
  const auto& last = history.back();
  for (std::size_t i = history.size() - need; i + 1 < history.size(); ++i) {
    if (history[i] != last) return false;
  }
  return true;
}

}  // namespace dsc
