#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dsc/common.hpp"
#include "dsc/tensor.hpp"

// Internal cluster-validity metrics (average intercluster distance, average
// variance, RMSE over cluster means, silhouette, Davies-Bouldin), external
// indices for labeled data (ARI, NMI) and a deterministic 2-D PCA projection
// for plot export. All distances are Euclidean; everything runs in double.

namespace dsc {

struct MetricsReport {
  double silhouette = 0.0;                  // in [-1, 1]
  double davies_bouldin = 0.0;              // >= 0, lower is better
  double rmse_mean = 0.0;                   // >= 0
  double avg_intercluster_distance = 0.0;   // >= 0
  double avg_variance_literal = 0.0;        // mean squared distance to centroid
  double avg_variance_per_feature = 0.0;    // literal / D
  std::optional<double> ari;                // only with ground truth
  std::optional<double> nmi;
  std::string space = "input";              // which feature space was measured
};

namespace detail {

inline double euclid_rows(const double* a, const double* b, std::size_t d) {
  double acc = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

struct Partition {
  std::size_t k = 0;
  std::vector<std::vector<std::size_t>> members;
};

inline Partition partition_of(const Tensor<double>& x, const std::vector<int>& labels) {
  if (x.rank() != 2) throw DimensionError("metrics: data must be (T, D)");
  if (labels.size() != x.extent(0)) {
    throw DimensionError("metrics: label count does not match row count");
  }
  int maxl = -1;
  for (int l : labels) {
    if (l < 0) throw MetricError("metrics: negative cluster label");
    maxl = std::max(maxl, l);
  }
  Partition p;
  p.k = static_cast<std::size_t>(maxl) + 1;
  p.members.resize(p.k);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    p.members[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  for (std::size_t j = 0; j < p.k; ++j) {
    if (p.members[j].empty()) {
      throw MetricError("metrics: cluster " + std::to_string(j) + " is empty");
    }
  }
  return p;
}

inline Tensor<double> cluster_means(const Tensor<double>& x, const Partition& p) {
  const std::size_t d = x.extent(1);
  Tensor<double> mu({p.k, d});
  for (std::size_t j = 0; j < p.k; ++j) {
    for (std::size_t i : p.members[j]) {
      for (std::size_t c = 0; c < d; ++c) mu(j, c) += x(i, c);
    }
    const double inv = 1.0 / static_cast<double>(p.members[j].size());
    for (std::size_t c = 0; c < d; ++c) mu(j, c) *= inv;
  }
  return mu;
}

}  // namespace detail

/// Minimum distance between any cross-pair of two clusters (single linkage).
inline double intercluster_distance(const Tensor<double>& x, const std::vector<int>& labels,
                                    int a, int b) {
  const auto p = detail::partition_of(x, labels);
  if (a == b || a < 0 || b < 0 || static_cast<std::size_t>(a) >= p.k ||
      static_cast<std::size_t>(b) >= p.k) {
    throw MetricError("intercluster_distance: invalid cluster pair");
  }
  const std::size_t d = x.extent(1);
  double best = std::numeric_limits<double>::max();
  for (std::size_t i : p.members[static_cast<std::size_t>(a)]) {
    for (std::size_t j : p.members[static_cast<std::size_t>(b)]) {
      best = std::min(best, detail::euclid_rows(x.data() + i * d, x.data() + j * d, d));
    }
  }
  return best;
}

/// Mean of the pairwise minimum distances over all unordered cluster pairs.
inline double avg_intercluster_distance(const Tensor<double>& x,
                                        const std::vector<int>& labels) {
  const auto p = detail::partition_of(x, labels);
  if (p.k < 2) throw MetricError("avg_intercluster_distance: need k >= 2");
  const std::size_t d = x.extent(1);
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < p.k; ++a) {
    for (std::size_t b = a + 1; b < p.k; ++b) {
      double best = std::numeric_limits<double>::max();
      for (std::size_t i : p.members[a]) {
        for (std::size_t j : p.members[b]) {
          best = std::min(best, detail::euclid_rows(x.data() + i * d, x.data() + j * d, d));
        }
      }
      total += best;
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

/// Mean squared distance of a cluster's members to its mean.
inline double cluster_variance(const Tensor<double>& x, const std::vector<int>& labels,
                               int j) {
  const auto p = detail::partition_of(x, labels);
  if (j < 0 || static_cast<std::size_t>(j) >= p.k) {
    throw MetricError("cluster_variance: no such cluster");
  }
  const auto mu = detail::cluster_means(x, p);
  const std::size_t d = x.extent(1);
  const auto& rows = p.members[static_cast<std::size_t>(j)];
  double acc = 0.0;
  for (std::size_t i : rows) {
    const double dist = detail::euclid_rows(x.data() + i * d,
                                            mu.data() + static_cast<std::size_t>(j) * d, d);
    acc += dist * dist;
  }
  return acc / static_cast<double>(rows.size());
}

/// Cluster variance averaged over clusters, reported both literally and
/// divided by the feature count (the two scales differ by a factor of D).
inline std::pair<double, double> avg_variance(const Tensor<double>& x,
                                              const std::vector<int>& labels) {
  const auto p = detail::partition_of(x, labels);
  const auto mu = detail::cluster_means(x, p);
  const std::size_t d = x.extent(1);
  double total = 0.0;
  for (std::size_t j = 0; j < p.k; ++j) {
    double acc = 0.0;
    for (std::size_t i : p.members[j]) {
      const double dist = detail::euclid_rows(x.data() + i * d, mu.data() + j * d, d);
      acc += dist * dist;
    }
    total += acc / static_cast<double>(p.members[j].size());
  }
  const double literal = total / static_cast<double>(p.k);
  return {literal, literal / static_cast<double>(d)};
}

/// Root of the dataset-averaged squared distance to the assigned cluster mean.
inline double rmse_mean(const Tensor<double>& x, const std::vector<int>& labels) {
  const auto p = detail::partition_of(x, labels);
  const auto mu = detail::cluster_means(x, p);
  const std::size_t d = x.extent(1);
  double total = 0.0;
  for (std::size_t j = 0; j < p.k; ++j) {
    for (std::size_t i : p.members[j]) {
      const double dist = detail::euclid_rows(x.data() + i * d, mu.data() + j * d, d);
      total += dist * dist;
    }
  }
  return std::sqrt(total / static_cast<double>(x.extent(0)));
}

/// Mean silhouette value. For each point, a is the mean distance to its own
/// cluster (excluding itself), b the smallest mean distance to another
/// cluster; points in singleton clusters score 0.
inline double silhouette(const Tensor<double>& x, const std::vector<int>& labels) {
  const auto p = detail::partition_of(x, labels);
  if (p.k < 2) throw MetricError("silhouette: need k >= 2");
  const std::size_t n = x.extent(0), d = x.extent(1);
  Tensor<double> dist({n, n});
  parallel_for(n, 0, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        dist(i, j) = detail::euclid_rows(x.data() + i * d, x.data() + j * d, d);
      }
    }
  });
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t own = static_cast<std::size_t>(labels[i]);
    if (p.members[own].size() == 1) continue;  // s = 0
    double a = 0.0;
    for (std::size_t j : p.members[own]) {
      if (j != i) a += dist(i, j);
    }
    a /= static_cast<double>(p.members[own].size() - 1);
    double b = std::numeric_limits<double>::max();
    for (std::size_t other = 0; other < p.k; ++other) {
      if (other == own) continue;
      double mean = 0.0;
      for (std::size_t j : p.members[other]) mean += dist(i, j);
      mean /= static_cast<double>(p.members[other].size());
      b = std::min(b, mean);
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

/// (1/k) sum_i max_{j != i} (S_i + S_j) / M_ij with S the mean distance to the
/// cluster centroid and M the centroid separation.
inline double davies_bouldin(const Tensor<double>& x, const std::vector<int>& labels) {
  const auto p = detail::partition_of(x, labels);
  if (p.k < 2) throw MetricError("davies_bouldin: need k >= 2");
  const auto mu = detail::cluster_means(x, p);
  const std::size_t d = x.extent(1);
  std::vector<double> scatter(p.k, 0.0);
  for (std::size_t j = 0; j < p.k; ++j) {
    for (std::size_t i : p.members[j]) {
      scatter[j] += detail::euclid_rows(x.data() + i * d, mu.data() + j * d, d);
    }
    scatter[j] /= static_cast<double>(p.members[j].size());
  }
  double total = 0.0;
  for (std::size_t i = 0; i < p.k; ++i) {
    double worst = 0.0;
    for (std::size_t j = 0; j < p.k; ++j) {
      if (i == j) continue;
      const double sep = detail::euclid_rows(mu.data() + i * d, mu.data() + j * d, d);
      if (sep == 0.0) {
        throw MetricError("davies_bouldin: coincident centroids");
      }
      worst = std::max(worst, (scatter[i] + scatter[j]) / sep);
    }
    total += worst;
  }
  return total / static_cast<double>(p.k);
}

namespace detail {

struct Contingency {
  std::size_t n = 0;
  std::vector<std::size_t> row_sums, col_sums;
  std::map<std::pair<int, int>, std::size_t> cells;
};

inline Contingency contingency_of(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw DimensionError("external index: label vectors differ in length");
  }
  std::map<int, std::size_t> amap, bmap;
  for (int v : a) amap.emplace(v, amap.size());
  for (int v : b) bmap.emplace(v, bmap.size());
  Contingency c;
  c.n = a.size();
  c.row_sums.assign(amap.size(), 0);
  c.col_sums.assign(bmap.size(), 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++c.row_sums[amap[a[i]]];
    ++c.col_sums[bmap[b[i]]];
    ++c.cells[{a[i], b[i]}];
  }
  return c;
}

inline double choose2(std::size_t n) {
  return 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
}

}  // namespace detail

/// Adjusted Rand index between two labelings.
inline double adjusted_rand_index(const std::vector<int>& labels,
                                  const std::vector<int>& truth) {
  const auto c = detail::contingency_of(labels, truth);
  double index = 0.0;
  for (const auto& [cell, count] : c.cells) index += detail::choose2(count);
  double sum_a = 0.0, sum_b = 0.0;
  for (std::size_t s : c.row_sums) sum_a += detail::choose2(s);
  for (std::size_t s : c.col_sums) sum_b += detail::choose2(s);
  const double expected = sum_a * sum_b / detail::choose2(c.n);
  const double maximum = 0.5 * (sum_a + sum_b);
  const double denom = maximum - expected;
  if (denom == 0.0) {
    return index - expected == 0.0 ? 1.0 : 0.0;  // both partitions trivial
  }
  return (index - expected) / denom;
}

/// Normalized mutual information, arithmetic-mean normalization.
inline double normalized_mutual_info(const std::vector<int>& labels,
                                     const std::vector<int>& truth) {
  const auto c = detail::contingency_of(labels, truth);
  const double n = static_cast<double>(c.n);
  std::map<int, std::size_t> amap, bmap;
  for (int v : labels) amap.emplace(v, amap.size());
  for (int v : truth) bmap.emplace(v, bmap.size());
  double mi = 0.0;
  for (const auto& [cell, count] : c.cells) {
    const double pij = static_cast<double>(count) / n;
    const double pi = static_cast<double>(c.row_sums[amap[cell.first]]) / n;
    const double pj = static_cast<double>(c.col_sums[bmap[cell.second]]) / n;
    mi += pij * std::log(pij / (pi * pj));
  }
  double ha = 0.0, hb = 0.0;
  for (std::size_t s : c.row_sums) {
    const double pi = static_cast<double>(s) / n;
    if (pi > 0.0) ha -= pi * std::log(pi);
  }
  for (std::size_t s : c.col_sums) {
    const double pj = static_cast<double>(s) / n;
    if (pj > 0.0) hb -= pj * std::log(pj);
  }
  const double denom = 0.5 * (ha + hb);
  if (denom == 0.0) return 1.0;  // both single-cluster: identical partitions
  return std::max(0.0, mi / denom);
}

// ---------------------------------------------------------------------------
// PCA

struct Projection {
  Tensor<double> coords;                    // (T, 2)
  std::array<double, 2> explained{{0, 0}};  // variance ratio per component
};

/// Projects rows onto the top-2 principal components via matrix-free,
/// seeded power iteration with deflation. Deterministic by construction.
inline Projection pca_project_2d(const Tensor<double>& x) {
  if (x.rank() != 2) throw DimensionError("pca_project_2d: input must be (T, D)");
  const std::size_t n = x.extent(0), d = x.extent(1);
  if (n < 3) throw ConfigError("pca_project_2d: need at least 3 rows");
  Tensor<double> centered = x;
  for (std::size_t c = 0; c < d; ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x(i, c);
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) centered(i, c) -= mean;
  }
  double total_var = 0.0;
  for (std::size_t i = 0; i < centered.size(); ++i) total_var += centered[i] * centered[i];
  total_var /= static_cast<double>(n - 1);
  if (total_var <= 0.0) {
    throw DegenerateDataError("pca_project_2d: data has no variance");
  }

  auto cov_apply = [&](const std::vector<double>& v, std::vector<double>& out) {
    // out = X^T (X v) / (n - 1), without forming the covariance
    std::vector<double> xv(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = centered.data() + i * d;
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) acc += row[c] * v[c];
      xv[i] = acc;
    }
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = centered.data() + i * d;
      const double s = xv[i];
      for (std::size_t c = 0; c < d; ++c) out[c] += s * row[c];
    }
    const double inv = 1.0 / static_cast<double>(n - 1);
    for (std::size_t c = 0; c < d; ++c) out[c] *= inv;
  };

  std::vector<std::vector<double>> comps;
  std::array<double, 2> eigenvalues{{0.0, 0.0}};
  Rng rng(0x9e3779b97f4a7c15ull);
  for (std::size_t comp = 0; comp < 2; ++comp) {
    std::vector<double> v(d);
    for (std::size_t c = 0; c < d; ++c) v[c] = rng.uniform(-1.0, 1.0);
    auto orthogonalize = [&](std::vector<double>& u) {
      for (const auto& prev : comps) {
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += u[c] * prev[c];
        for (std::size_t c = 0; c < d; ++c) u[c] -= dot * prev[c];
      }
    };
    auto normalize = [&](std::vector<double>& u) {
      double nrm = 0.0;
      for (double val : u) nrm += val * val;
      nrm = std::sqrt(nrm);
      if (nrm < 1e-150) return false;
      for (double& val : u) val /= nrm;
      return true;
    };
    orthogonalize(v);
    if (!normalize(v)) {
      // no variance left orthogonal to earlier components
      std::fill(v.begin(), v.end(), 0.0);
      comps.push_back(v);
      continue;
    }
    std::vector<double> w(d);
    double prev_lambda = 0.0;
    for (int iter = 0; iter < 300; ++iter) {
      cov_apply(v, w);
      orthogonalize(w);
      double lambda = 0.0;
      for (std::size_t c = 0; c < d; ++c) lambda += w[c] * v[c];
      if (!normalize(w)) {
        std::fill(v.begin(), v.end(), 0.0);
        lambda = 0.0;
        break;
      }
      v = w;
      if (std::abs(lambda - prev_lambda) <= 1e-13 * std::max(1.0, std::abs(lambda))) {
        prev_lambda = lambda;
        break;
      }
      prev_lambda = lambda;
    }
    eigenvalues[comp] = std::max(0.0, prev_lambda);
    comps.push_back(v);
  }

  Projection proj;
  proj.coords = Tensor<double>({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t comp = 0; comp < 2; ++comp) {
      double acc = 0.0;
      const double* row = centered.data() + i * d;
      for (std::size_t c = 0; c < d; ++c) acc += row[c] * comps[comp][c];
      proj.coords(i, comp) = acc;
    }
  }
  proj.explained = {eigenvalues[0] / total_var, eigenvalues[1] / total_var};
  return proj;
}

/// Full report over one feature space. Labels are compacted to the clusters
/// actually present so a run that lost a cluster still reports cleanly.
inline MetricsReport compute_metrics(const Tensor<double>& x, const std::vector<int>& labels,
                                     const std::string& space,
                                     const std::vector<int>* truth = nullptr) {
  std::map<int, int> remap;
  for (int l : labels) remap.emplace(l, static_cast<int>(remap.size()));
  std::vector<int> compact(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) compact[i] = remap[labels[i]];
  MetricsReport r;
  r.space = space;
  r.silhouette = silhouette(x, compact);
  r.davies_bouldin = davies_bouldin(x, compact);
  r.rmse_mean = rmse_mean(x, compact);
  r.avg_intercluster_distance = avg_intercluster_distance(x, compact);
  const auto [lit, perf] = avg_variance(x, compact);
  r.avg_variance_literal = lit;
  r.avg_variance_per_feature = perf;
  if (truth) {
    r.ari = adjusted_rand_index(labels, *truth);
    r.nmi = normalized_mutual_info(labels, *truth);
  }
  return r;
}

}  // namespace dsc
