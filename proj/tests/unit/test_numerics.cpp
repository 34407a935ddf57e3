#include <doctest.h>

#include <random>

#include "mmselect/error.hpp"
#include "mmselect/numerics.hpp"
#include "mmselect/synth.hpp"
#include "oracles.hpp"

using namespace mmselect;
using namespace mmselect::numerics;

namespace {

// Minimum within-cluster sum of squares over every labeling of `x` into
// exactly k nonempty groups.
double brute_force_wcss(const std::vector<double>& x, int k) {
  const std::size_t n = x.size();
  std::vector<int> label(n, 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    std::vector<double> sum(static_cast<std::size_t>(k), 0.0), sq(static_cast<std::size_t>(k), 0.0);
    std::vector<int> count(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[label[i]] += x[i];
      sq[label[i]] += x[i] * x[i];
      ++count[label[i]];
    }
    if (std::all_of(count.begin(), count.end(), [](int c) { return c > 0; })) {
      double w = 0.0;
      for (int c = 0; c < k; ++c) w += sq[c] - sum[c] * sum[c] / count[c];
      best = std::min(best, w);
    }
    std::size_t i = 0;
    while (i < n && ++label[i] == k) label[i++] = 0;
    if (i == n) break;
  }
  return best;
}

Matrix column(const std::vector<double>& x) {
  Matrix m(static_cast<Index>(x.size()), 1);
  for (std::size_t i = 0; i < x.size(); ++i) m(static_cast<Index>(i), 0) = x[i];
  return m;
}

Matrix blobs(const std::vector<std::vector<double>>& centers, int per, double spread, std::uint64_t seed,
             std::vector<int>* truth) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, spread);
  const Index d = static_cast<Index>(centers[0].size());
  Matrix out(static_cast<Index>(centers.size()) * per, d);
  Index r = 0;
  for (std::size_t c = 0; c < centers.size(); ++c) {
    for (int i = 0; i < per; ++i, ++r) {
      for (Index j = 0; j < d; ++j) out(r, j) = centers[c][static_cast<std::size_t>(j)] + normal(rng);
      if (truth) truth->push_back(static_cast<int>(c));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("pca matches a Jacobi eigendecomposition of the covariance") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Matrix x = oracle::random_matrix(20, 8, seed);
    const auto model = pca_fit(x, 6);
    const auto [values, vectors] = oracle::jacobi_eigen(oracle::covariance(x));
    for (Index c = 0; c < 6; ++c) {
      const Index j = 7 - c;
      CHECK(model.explained_variance(c) == doctest::Approx(values(j)).epsilon(1e-10));
      const Vector ref = vectors.col(j);
      const double sign = ref.dot(model.components.row(c).transpose()) >= 0 ? 1.0 : -1.0;
      CHECK((model.components.row(c).transpose() - sign * ref).cwiseAbs().maxCoeff() < 1e-8);
    }
    CHECK((model.components * model.components.transpose() - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-8);
    for (Index c = 0; c < 6; ++c) {
      Index arg = 0;
      model.components.row(c).cwiseAbs().maxCoeff(&arg);
      CHECK(model.components(c, arg) > 0);
    }
    CHECK(model.explained_variance.sum() <= oracle::covariance(x).trace() + 1e-8);
    CHECK(pca_transform(model, x).cols() == 6);
  }
}

TEST_CASE("pca edge cases") {
  SUBCASE("rank one data") {
    Matrix x(3, 3);
    x << 1, 2, 3, 2, 4, 6, -1, -2, -3;
    const auto model = pca_fit(x, 1);
    CHECK(model.explained_variance(0) / oracle::covariance(x).trace() == doctest::Approx(1.0).epsilon(1e-12));
    const auto two = pca_fit(x, 2);
    CHECK(std::abs(two.explained_variance(1)) < 1e-12);
  }
  SUBCASE("full rank round trip") {
    const Matrix x = oracle::random_matrix(5, 3, 7);
    const auto model = pca_fit(x, 3);
    CHECK((pca_inverse_transform(model, pca_transform(model, x)) - x).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("transform of the mean and transformed variances") {
    const Matrix x = oracle::random_matrix(30, 5, 8);
    const auto model = pca_fit(x, 4);
    CHECK(pca_transform(model, model.mean.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    const Matrix z = pca_transform(model, x);
    for (Index c = 0; c < 4; ++c) {
      const double var = (z.col(c).array() - z.col(c).mean()).square().sum() / 29.0;
      CHECK(var == doctest::Approx(model.explained_variance(c)).epsilon(1e-8));
    }
  }
  SUBCASE("rank bounds") {
    const Matrix x = oracle::random_matrix(4, 6, 9);
    CHECK_THROWS_AS(pca_fit(x, 0), Error);
    CHECK_THROWS_AS(pca_fit(x, 4), Error);  // > N-1
    CHECK_NOTHROW(pca_fit(x, 3));
    CHECK_THROWS_AS(pca_transform(pca_fit(x, 3), oracle::random_matrix(2, 5, 1)), Error);
  }
}

TEST_CASE("partial eigensolver agrees with dense solutions") {
  SUBCASE("small dense path against Jacobi") {
    Matrix a = oracle::random_matrix(12, 12, 3);
    a = (a + a.transpose()).eval();
    const auto got = smallest_eigenpairs(a, 4, 1);
    const auto [values, vectors] = oracle::jacobi_eigen(a);
    for (Index i = 0; i < 4; ++i) {
      CHECK(got.values(i) == doctest::Approx(values(i)).epsilon(1e-10));
      CHECK(std::abs(std::abs(got.vectors.col(i).dot(vectors.col(i))) - 1.0) < 1e-8);
    }
  }
  SUBCASE("Krylov path on a clustered Laplacian") {
    std::vector<int> truth;
    const Matrix x = blobs({{0, 0}, {6, 0}, {0, 6}, {6, 6}}, 180, 1.0, 4, &truth);
    const Matrix w = gaussian_affinity(x);
    const Vector dinv = w.rowwise().sum().cwiseSqrt().cwiseInverse();
    const Matrix lap = Matrix::Identity(w.rows(), w.rows()) - dinv.asDiagonal() * w * dinv.asDiagonal();
    const auto got = smallest_eigenpairs(lap, 4, 2);
    Eigen::SelfAdjointEigenSolver<Matrix> dense(lap);
    for (Index i = 0; i < 4; ++i) {
      CHECK(got.values(i) == doctest::Approx(dense.eigenvalues()(i)).epsilon(1e-8));
      const Vector residual = lap * got.vectors.col(i) - got.values(i) * got.vectors.col(i);
      CHECK(residual.norm() < 1e-7);
    }
  }
}

TEST_CASE("k-means++ reaches the exhaustive WCSS optimum on small 1-D inputs") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-10, 10);
  int instances = 0;
  for (int n = 1; n <= 8; ++n) {
    for (int k = 1; k <= std::min(3, n); ++k) {
      for (int rep = 0; rep < 4; ++rep) {
        std::vector<double> x(static_cast<std::size_t>(n));
        for (auto& v : x) v = u(rng);
        const auto got = kmeans_pp(column(x), k, static_cast<std::uint64_t>(rep));
        CHECK(got.inertia == doctest::Approx(brute_force_wcss(x, k)).epsilon(1e-9).scale(1.0));
        ++instances;
      }
    }
  }
  CHECK(instances > 60);
}

TEST_CASE("k-means++ basics") {
  const auto two = kmeans_pp(column({0, 0.1, 10, 10.1}), 2, 1);
  CHECK(two.labels[0] == two.labels[1]);
  CHECK(two.labels[2] == two.labels[3]);
  CHECK(two.labels[0] != two.labels[2]);

  const Matrix x = oracle::random_matrix(9, 2, 5);
  const auto all = kmeans_pp(x, 9, 1);
  CHECK(all.inertia == doctest::Approx(0.0));
  CHECK(std::all_of(all.sizes.begin(), all.sizes.end(), [](Index s) { return s == 1; }));
  CHECK_THROWS_AS(kmeans_pp(x, 10, 1), Error);

  const Matrix y = oracle::random_matrix(200, 3, 6);
  const auto a = kmeans_pp(y, 5, 42);
  const auto b = kmeans_pp(y, 5, 42);
  CHECK(a.labels == b.labels);
  for (std::size_t i = 1; i < a.inertia_trace.size(); ++i) CHECK(a.inertia_trace[i] <= a.inertia_trace[i - 1] + 1e-9);
  CHECK(within_cluster_ss(y, a.labels, 5) == doctest::Approx(a.inertia).epsilon(1e-10));
  Index total = 0;
  for (Index s : a.sizes) total += s;
  CHECK(total == 200);
}

TEST_CASE("balanced k-means on the synthetic corpus scale") {
  synth::SynthConfig config;
  config.seed = 3;
  const auto syn = synth::synthesize(config);
  const Matrix x = syn.features.at("image").values();
  KMeansOptions options;
  options.balanced = true;
  const auto got = kmeans_pp(x, 30, 1, options);
  int leftover = 0;
  std::vector<int> count(30, 0);
  for (int l : got.labels) {
    if (l < 0) {
      ++leftover;
    } else {
      ++count[l];
    }
  }
  CHECK(leftover == 19);
  CHECK(std::all_of(count.begin(), count.end(), [](int c) { return c == 114; }));
  CHECK(std::all_of(got.sizes.begin(), got.sizes.end(), [](Index s) { return s == 114; }));
}

TEST_CASE("spectral clustering") {
  SUBCASE("disconnected affinity blocks") {
    Matrix w = Matrix::Zero(10, 10);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.2, 1.0);
    const std::vector<int> truth{0, 1, 0, 1, 1, 0, 0, 1, 0, 1};
    for (int i = 0; i < 10; ++i)
      for (int j = i + 1; j < 10; ++j)
        if (truth[i] == truth[j]) w(i, j) = w(j, i) = u(rng);
    const auto r = spectral_cluster_affinity(w, 2, 3);
    CHECK(oracle::same_partition(r.assignment.labels, truth));
    CHECK(std::abs(r.eigenvalues(0)) < 1e-8);
    CHECK(std::abs(r.eigenvalues(1)) < 1e-8);
  }
  SUBCASE("three Gaussian blobs") {
    std::vector<int> truth;
    const Matrix x = blobs({{0, 0}, {8, 0}, {4, 7}}, 40, 0.5, 11, &truth);
    const auto r = spectral_cluster(x, 3, 5);
    CHECK(oracle::same_partition(r.assignment.labels, truth));
    CHECK(r.eigenvalues.minCoeff() >= -1e-8);
    CHECK(r.eigenvalues.maxCoeff() <= 2 + 1e-8);
    for (Index i = 0; i < r.embedding.rows(); ++i) CHECK(std::abs(r.embedding.row(i).norm() - 1.0) < 1e-8);
    CHECK(r.sigma == doctest::Approx(median_pairwise_distance(x)));
  }
  SUBCASE("one cluster and degenerate input") {
    const auto r = spectral_cluster(oracle::random_matrix(12, 3, 2), 1, 0);
    CHECK(std::all_of(r.assignment.labels.begin(), r.assignment.labels.end(), [](int l) { return l == 0; }));
    try {
      spectral_cluster(Matrix::Ones(5, 2), 2, 0);
      FAIL("expected DegenerateAffinity");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::DegenerateAffinity);
    }
  }
}
