#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <tuple>

#include "mmselect/error.hpp"
#include "mmselect/numerics.hpp"

namespace mmselect::numerics {

namespace {

double squared_distance(const Matrix& a, Index i, const Matrix& b, Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

// Nearest centroid per row; ties go to the lower centroid index.
double assign(const Matrix& data, const Matrix& centroids, std::vector<int>& labels,
              std::vector<double>& dist) {
  double total = 0.0;
  for (Index i = 0; i < data.rows(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index c = 0; c < centroids.rows(); ++c) {
      const double d = squared_distance(data, i, centroids, c);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    labels[i] = best;
    dist[i] = best_d;
    total += best_d;
  }
  return total;
}

Matrix seed_centroids(const Matrix& data, int k, std::mt19937_64& rng) {
  const Index n = data.rows();
  Matrix centroids(k, data.cols());
  std::vector<bool> chosen(n, false);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());

  Index first = std::uniform_int_distribution<Index>(0, n - 1)(rng);
  centroids.row(0) = data.row(first);
  chosen[first] = true;

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(data, i, centroids, c - 1));
      total += nearest[i];
    }
    Index pick = -1;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      for (Index i = 0; i < n; ++i) {
        if (nearest[i] <= 0.0) continue;
        acc += nearest[i];
        pick = i;
        if (acc > target) break;
      }
    } else {
      // All remaining rows coincide with a centroid.
      for (Index i = 0; i < n && pick < 0; ++i) {
        if (!chosen[i]) pick = i;
      }
    }
    centroids.row(c) = data.row(pick);
    chosen[pick] = true;
  }
  return centroids;
}

ClusterAssignment lloyd(const Matrix& data, Matrix centroids, int max_iterations) {
  const Index n = data.rows();
  const int k = static_cast<int>(centroids.rows());
  ClusterAssignment out;
  out.labels.assign(n, -1);
  std::vector<int> labels(n, -1);
  std::vector<double> dist(n, 0.0);

  for (int iter = 0; iter < max_iterations; ++iter) {
    const double inertia = assign(data, centroids, labels, dist);
    out.inertia_trace.push_back(inertia);
    out.iterations = iter + 1;
    if (labels == out.labels) break;
    out.labels = labels;

    std::vector<Index> counts(k, 0);
    Matrix sums = Matrix::Zero(k, data.cols());
    for (Index i = 0; i < n; ++i) {
      sums.row(labels[i]) += data.row(i);
      ++counts[labels[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) centroids.row(c) = sums.row(c) / static_cast<double>(counts[c]);
    }
    // Re-seed empty clusters from the row farthest from its centroid.
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      Index far = -1;
      for (Index i = 0; i < n; ++i) {
        if (counts[labels[i]] > 1 && (far < 0 || dist[i] > dist[far])) far = i;
      }
      if (far < 0) break;
      --counts[labels[far]];
      labels[far] = c;
      counts[c] = 1;
      dist[far] = 0.0;
      centroids.row(c) = data.row(far);
      out.labels[far] = -1;  // force another assignment pass
    }
  }
  out.centroids = std::move(centroids);
  out.inertia = out.inertia_trace.back();
  return out;
}

void recompute(const Matrix& data, ClusterAssignment& a, int k) {
  a.sizes.assign(k, 0);
  Matrix sums = Matrix::Zero(k, data.cols());
  for (Index i = 0; i < data.rows(); ++i) {
    if (a.labels[i] < 0) continue;
    sums.row(a.labels[i]) += data.row(i);
    ++a.sizes[a.labels[i]];
  }
  for (int c = 0; c < k; ++c) {
    if (a.sizes[c] > 0) a.centroids.row(c) = sums.row(c) / static_cast<double>(a.sizes[c]);
  }
  a.inertia = 0.0;
  for (Index i = 0; i < data.rows(); ++i) {
    if (a.labels[i] >= 0) a.inertia += squared_distance(data, i, a.centroids, a.labels[i]);
  }
}

// Each cluster keeps its `capacity` closest members. Evicted rows are matched
// greedily, closest pair first, to centroids that still have room; whatever is
// left when every cluster is full gets label -1.
void balance(const Matrix& data, ClusterAssignment& a, int k, Index capacity) {
  const Index n = data.rows();
  std::vector<std::vector<Index>> members(k);
  for (Index i = 0; i < n; ++i) members[a.labels[i]].push_back(i);

  std::vector<Index> pool;
  std::vector<Index> fill(k, 0);
  for (int c = 0; c < k; ++c) {
    auto& m = members[c];
    std::stable_sort(m.begin(), m.end(), [&](Index x, Index y) {
      return squared_distance(data, x, a.centroids, c) < squared_distance(data, y, a.centroids, c);
    });
    for (std::size_t r = static_cast<std::size_t>(capacity); r < m.size(); ++r) {
      a.labels[m[r]] = -1;
      pool.push_back(m[r]);
    }
    fill[c] = std::min<Index>(capacity, static_cast<Index>(m.size()));
  }
  std::sort(pool.begin(), pool.end());

  std::vector<std::tuple<double, Index, int>> pairs;
  for (Index i : pool) {
    for (int c = 0; c < k; ++c) {
      if (fill[c] < capacity) pairs.emplace_back(squared_distance(data, i, a.centroids, c), i, c);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  for (const auto& [d, i, c] : pairs) {
    if (a.labels[i] >= 0 || fill[c] >= capacity) continue;
    a.labels[i] = c;
    ++fill[c];
  }
}

}  // namespace

ClusterAssignment kmeans_pp(const Matrix& data, int k, std::uint64_t seed, const KMeansOptions& options) {
  const Index n = data.rows();
  if (k < 1) throw Error(Errc::BadConfig, "k must be positive");
  if (k > n) throw Error(Errc::TooManyClusters, std::to_string(k) + " clusters for " + std::to_string(n) + " rows");
  if (options.max_iterations < 1 || options.restarts < 1) throw Error(Errc::BadConfig, "k-means iteration limits");

  Index capacity = 0;
  if (options.balanced) {
    capacity = options.capacity.value_or(n / k);
    if (capacity < 1 || capacity * k > n) {
      throw Error(Errc::BadConfig, "balanced capacity " + std::to_string(capacity) + " x " + std::to_string(k) +
                                       " exceeds " + std::to_string(n) + " rows");
    }
  }

  std::mt19937_64 rng(seed);
  ClusterAssignment best;
  for (int r = 0; r < options.restarts; ++r) {
    ClusterAssignment run = lloyd(data, seed_centroids(data, k, rng), options.max_iterations);
    if (r == 0 || run.inertia < best.inertia) best = std::move(run);
  }

  if (options.balanced) balance(data, best, k, capacity);
  recompute(data, best, k);
  for (int c = 0; c < k; ++c) {
    if (best.sizes[c] == 0) throw Error(Errc::EmptyCluster, "cluster " + std::to_string(c));
  }
  return best;
}

double within_cluster_ss(const Matrix& data, const std::vector<int>& labels, int k) {
  Matrix sums = Matrix::Zero(k, data.cols());
  std::vector<Index> counts(k, 0);
  for (Index i = 0; i < data.rows(); ++i) {
    if (labels[i] < 0) continue;
    sums.row(labels[i]) += data.row(i);
    ++counts[labels[i]];
  }
  double total = 0.0;
  for (Index i = 0; i < data.rows(); ++i) {
    if (labels[i] < 0) continue;
    total += (data.row(i) - sums.row(labels[i]) / static_cast<double>(counts[labels[i]])).squaredNorm();
  }
  return total;
}

}  // namespace mmselect::numerics
