#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <limits>
#include <optional>
#include <vector>

#include "dsc/common.hpp"
#include "dsc/tensor.hpp"

// Classical clustering baselines on flattened observations: Lloyd's k-means
// with k-means++ seeding and multiple restarts, and agglomerative
// hierarchical clustering with Ward linkage via the Lance-Williams update.

namespace dsc {

namespace detail {

template <class T>
double sq_dist_rows(const T* a, const T* b, std::size_t d) {
  double acc = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += diff * diff;
  }
  return acc;
}

/// k-means++: first center uniform, then proportional to squared distance
/// from the nearest chosen center.
template <class T>
Tensor<T> kmeanspp_init(const Tensor<T>& x, std::size_t k, Rng& rng) {
  const std::size_t n = x.extent(0), d = x.extent(1);
  Tensor<T> centroids({k, d});
  std::vector<double> dist2(n, std::numeric_limits<double>::max());
  std::size_t first = rng.below(n);
  for (std::size_t j = 0; j < d; ++j) centroids(std::size_t{0}, j) = x(first, j);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d2 =
          sq_dist_rows(x.data() + i * d, centroids.data() + (c - 1) * d, d);
      dist2[i] = std::min(dist2[i], d2);
      total += dist2[i];
    }
    std::size_t pick;
    if (total <= 0.0) {
      pick = rng.below(n);  // all points coincide with chosen centers
    } else {
      const double r = rng.unit() * total;
      double cum = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        cum += dist2[i];
        if (cum >= r) {
          pick = i;
          break;
        }
      }
    }
    for (std::size_t j = 0; j < d; ++j) centroids(c, j) = x(pick, j);
  }
  return centroids;
}

}  // namespace detail

template <class T>
struct KMeansResult {
  Tensor<T> centroids;      // (k, d)
  std::vector<int> labels;  // length n
  double sse = 0.0;         // within-cluster sum of squared distances
};

/// Lloyd iterations over `restarts` seeded k-means++ starts; returns the
/// restart with minimal SSE. An empty cluster is re-seeded to the point
/// farthest from its stale centroid before the next assignment.
template <class T>
KMeansResult<T> kmeans_fit(const Tensor<T>& x, std::size_t k, std::size_t restarts,
                           std::size_t max_iter, std::uint64_t seed) {
  if (x.rank() != 2) throw DimensionError("kmeans_fit: input must be (n, d)");
  const std::size_t n = x.extent(0), d = x.extent(1);
  if (k < 1 || k >= n) {
    throw ConfigError("kmeans_fit: need 1 <= k < n, got k=" + std::to_string(k) +
                      " n=" + std::to_string(n));
  }
  if (restarts < 1 || max_iter < 1) {
    throw ConfigError("kmeans_fit: restarts and max_iter must be >= 1");
  }
  Rng rng(seed);
  std::optional<KMeansResult<T>> best;
  std::vector<int> labels(n);
  std::vector<std::size_t> counts(k);
  for (std::size_t r = 0; r < restarts; ++r) {
    Tensor<T> centroids = detail::kmeanspp_init(x, k, rng);
    std::vector<int> prev;
    double sse = 0.0;
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
      // assignment, with ties to the lowest cluster index
      auto assign = [&] {
        sse = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          double bestd = std::numeric_limits<double>::max();
          int bestj = 0;
          for (std::size_t j = 0; j < k; ++j) {
            const double d2 =
                detail::sq_dist_rows(x.data() + i * d, centroids.data() + j * d, d);
            if (d2 < bestd) {
              bestd = d2;
              bestj = static_cast<int>(j);
            }
          }
          labels[i] = bestj;
          sse += bestd;
        }
      };
      assign();
      std::fill(counts.begin(), counts.end(), std::size_t{0});
      for (int l : labels) ++counts[static_cast<std::size_t>(l)];
      for (std::size_t fix = 0; fix < k; ++fix) {
        std::size_t empty = k;
        for (std::size_t j = 0; j < k; ++j) {
          if (counts[j] == 0) {
            empty = j;
            break;
          }
        }
        if (empty == k) break;
        // farthest point from the empty cluster's stale centroid
        double worst = -1.0;
        std::size_t pick = 0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d2 =
              detail::sq_dist_rows(x.data() + i * d, centroids.data() + empty * d, d);
          if (d2 > worst) {
            worst = d2;
            pick = i;
          }
        }
        for (std::size_t j = 0; j < d; ++j) centroids(empty, j) = x(pick, j);
        assign();
        std::fill(counts.begin(), counts.end(), std::size_t{0});
        for (int l : labels) ++counts[static_cast<std::size_t>(l)];
      }
      if (prev == labels) break;
      prev = labels;
      // means update; a cluster left empty after the fix cap keeps its centroid
      Tensor<T> sums({k, d});
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = static_cast<std::size_t>(labels[i]);
        T* srow = sums.data() + j * d;
        const T* xrow = x.data() + i * d;
        for (std::size_t c = 0; c < d; ++c) srow[c] += xrow[c];
      }
      for (std::size_t j = 0; j < k; ++j) {
        if (counts[j] == 0) continue;
        const T inv = T{1} / static_cast<T>(counts[j]);
        for (std::size_t c = 0; c < d; ++c) centroids(j, c) = sums(j, c) * inv;
      }
    }
    if (!best || sse < best->sse) {
      best = KMeansResult<T>{centroids, labels, sse};
    }
  }
  return *best;
}

/// Agglomerative clustering with Ward linkage, computed with the
/// Lance-Williams recurrence on a full squared-distance matrix. O(n^3) time,
/// which is fine at the few-hundred-observation scale this serves. Merge ties
/// break on the smallest pair of active cluster slots; output labels are
/// numbered by each cluster's smallest member index.
template <class T>
std::vector<int> hierarchical_fit(const Tensor<T>& x, std::size_t k) {
  if (x.rank() != 2) throw DimensionError("hierarchical_fit: input must be (n, d)");
  const std::size_t n = x.extent(0), d = x.extent(1);
  if (k < 1 || k >= n) {
    throw ConfigError("hierarchical_fit: need 1 <= k < n, got k=" + std::to_string(k) +
                      " n=" + std::to_string(n));
  }
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d2 = detail::sq_dist_rows(x.data() + i * d, x.data() + j * d, d);
      dist[i * n + j] = d2;
      dist[j * n + i] = d2;
    }
  }
  std::vector<bool> active(n, true);
  std::vector<std::size_t> size(n, 1);
  std::vector<std::vector<int>> members(n);
  for (std::size_t i = 0; i < n; ++i) members[i] = {static_cast<int>(i)};

  std::size_t remaining = n;
  while (remaining > k) {
    double bestd = std::numeric_limits<double>::max();
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!active[j]) continue;
        if (dist[i * n + j] < bestd) {
          bestd = dist[i * n + j];
          bi = i;
          bj = j;
        }
      }
    }
    // Ward update: d(k, i+j) from d(k,i), d(k,j), d(i,j) and cluster sizes.
    const double ni = static_cast<double>(size[bi]);
    const double nj = static_cast<double>(size[bj]);
    const double dij = dist[bi * n + bj];
    for (std::size_t c = 0; c < n; ++c) {
      if (!active[c] || c == bi || c == bj) continue;
      const double nc = static_cast<double>(size[c]);
      const double updated = ((ni + nc) * dist[bi * n + c] + (nj + nc) * dist[bj * n + c] -
                              nc * dij) /
                             (ni + nj + nc);
      dist[bi * n + c] = updated;
      dist[c * n + bi] = updated;
    }
    active[bj] = false;
    size[bi] += size[bj];
    members[bi].insert(members[bi].end(), members[bj].begin(), members[bj].end());
    members[bj].clear();
    --remaining;
  }
  // canonical labels: clusters ordered by their smallest member index
  std::vector<std::pair<int, std::size_t>> order;
  for (std::size_t i = 0; i < n; ++i) {
    if (!active[i]) continue;
    int lead = members[i][0];
    for (int mmb : members[i]) lead = std::min(lead, mmb);
    order.emplace_back(lead, i);
  }
  std::sort(order.begin(), order.end());
  std::vector<int> labels(n, -1);
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    for (int mmb : members[order[rank].second]) {
      labels[static_cast<std::size_t>(mmb)] = static_cast<int>(rank);
    }
  }
  return labels;
}

}  // namespace dsc
