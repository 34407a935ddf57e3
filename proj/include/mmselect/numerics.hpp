#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mmselect/types.hpp"

namespace mmselect::numerics {

// ---- PCA -------------------------------------------------------------------

struct PcaModel {
  Vector mean;                // d
  Matrix components;          // m x d, orthonormal rows
  Vector explained_variance;  // m, nonincreasing

  Index input_dim() const { return mean.size(); }
  Index output_dim() const { return components.rows(); }
};

// Top-m eigenvectors of the sample covariance (N-1 denominator). Each
// component's largest-magnitude entry is made positive.
PcaModel pca_fit(const Matrix& data, Index m);
Matrix pca_transform(const PcaModel& model, const Matrix& data);
Matrix pca_inverse_transform(const PcaModel& model, const Matrix& reduced);

// ---- symmetric eigensolvers ---------------------------------------------------

struct Eigenpairs {
  Vector values;   // ascending
  Matrix vectors;  // columns match values
};

// The `count` smallest eigenpairs of a symmetric matrix. Dense for small
// inputs, restarted block Krylov otherwise. Deterministic given `seed`.
Eigenpairs smallest_eigenpairs(const Matrix& sym, Index count, std::uint64_t seed);

// ---- k-means++ ---------------------------------------------------------------

struct KMeansOptions {
  int max_iterations = 300;
  int restarts = 10;  // independent D^2 seedings; the lowest-inertia run is kept
  bool balanced = false;
  std::optional<Index> capacity;  // balanced mode only; defaults to floor(N / k)
};

struct ClusterAssignment {
  std::vector<int> labels;  // -1 for rows left out by the balanced pass
  Matrix centroids;         // k x d
  std::vector<Index> sizes;
  double inertia = 0.0;
  std::vector<double> inertia_trace;  // Lloyd inertia per iteration of the kept run
  int iterations = 0;

  int k() const { return static_cast<int>(sizes.size()); }
};

ClusterAssignment kmeans_pp(const Matrix& data, int k, std::uint64_t seed, const KMeansOptions& options = {});

double within_cluster_ss(const Matrix& data, const std::vector<int>& labels, int k);

// ---- spectral clustering --------------------------------------------------------

struct SpectralResult {
  ClusterAssignment assignment;
  Vector eigenvalues;  // the K smallest eigenvalues of the normalized Laplacian
  Matrix embedding;    // N x K, rows unit-normalized
  double sigma = 0.0;  // kernel width (0 when an affinity was supplied)
};

double median_pairwise_distance(const Matrix& data);

// W_ij = exp(-|x_i - x_j|^2 / (2 sigma^2)), W_ii = 0, sigma = median pairwise distance.
Matrix gaussian_affinity(const Matrix& data, double* sigma_out = nullptr);

SpectralResult spectral_cluster_affinity(const Matrix& affinity, int k, std::uint64_t seed);
SpectralResult spectral_cluster(const Matrix& data, int k, std::uint64_t seed);

}  // namespace mmselect::numerics
