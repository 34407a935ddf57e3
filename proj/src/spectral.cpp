#include <algorithm>
#include <cmath>

#include "mmselect/error.hpp"
#include "mmselect/numerics.hpp"

namespace mmselect::numerics {

namespace {

Matrix squared_distances(const Matrix& data) {
  const Index n = data.rows();
  Matrix d2 = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double v = (data.row(i) - data.row(j)).squaredNorm();
      d2(i, j) = v;
      d2(j, i) = v;
    }
  }
  return d2;
}

double median_of_upper(const Matrix& d2) {
  const Index n = d2.rows();
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Index j = 1; j < n; ++j) {
    for (Index i = 0; i < j; ++i) values.push_back(std::sqrt(d2(i, j)));
  }
  if (values.empty()) return 0.0;
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lower + upper);
}

}  // namespace

double median_pairwise_distance(const Matrix& data) { return median_of_upper(squared_distances(data)); }

Matrix gaussian_affinity(const Matrix& data, double* sigma_out) {
  Matrix w = squared_distances(data);
  const double sigma = median_of_upper(w);
  if (!(sigma > 0.0)) throw Error(Errc::DegenerateAffinity, "median pairwise distance is zero");
  const double denom = 2.0 * sigma * sigma;
  w = (-w / denom).array().exp().matrix();
  w.diagonal().setZero();
  if (sigma_out) *sigma_out = sigma;
  return w;
}

SpectralResult spectral_cluster_affinity(const Matrix& affinity, int k, std::uint64_t seed) {
  const Index n = affinity.rows();
  if (affinity.cols() != n) throw Error(Errc::DimensionMismatch, "affinity must be square");
  if (k < 1) throw Error(Errc::BadConfig, "K must be positive");
  if (k > n) throw Error(Errc::TooManyClusters, std::to_string(k) + " clusters for " + std::to_string(n) + " rows");

  // Isolated vertices (zero degree) get a zero row in D^{-1/2} W D^{-1/2}.
  const Vector degree = affinity.rowwise().sum();
  Vector inv_sqrt(n);
  for (Index i = 0; i < n; ++i) inv_sqrt(i) = degree(i) > 0.0 ? 1.0 / std::sqrt(degree(i)) : 0.0;

  Matrix laplacian = -(inv_sqrt.asDiagonal() * affinity * inv_sqrt.asDiagonal());
  laplacian.diagonal().array() += 1.0;
  laplacian = 0.5 * (laplacian + laplacian.transpose()).eval();

  Eigenpairs pairs = smallest_eigenpairs(laplacian, k, seed);

  SpectralResult out;
  out.eigenvalues = pairs.values;
  out.embedding = std::move(pairs.vectors);
  for (Index i = 0; i < n; ++i) {
    const double norm = out.embedding.row(i).norm();
    if (norm > 0.0) out.embedding.row(i) /= norm;
  }
  out.assignment = kmeans_pp(out.embedding, k, seed);
  return out;
}

SpectralResult spectral_cluster(const Matrix& data, int k, std::uint64_t seed) {
  if (k > data.rows()) {
    throw Error(Errc::TooManyClusters, std::to_string(k) + " clusters for " + std::to_string(data.rows()) + " rows");
  }
  double sigma = 0.0;
  const Matrix w = gaussian_affinity(data, &sigma);
  SpectralResult out = spectral_cluster_affinity(w, k, seed);
  out.sigma = sigma;
  return out;
}

}  // namespace mmselect::numerics
