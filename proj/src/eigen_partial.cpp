#include <algorithm>
#include <cmath>
#include <random>

#include "mmselect/error.hpp"
#include "mmselect/numerics.hpp"

namespace mmselect::numerics {

namespace {

constexpr Index kDenseLimit = 512;
constexpr Index kBasisTarget = 240;
constexpr int kMaxCycles = 60;
constexpr double kTolerance = 1e-10;

Eigenpairs dense_smallest(const Matrix& sym, Index count) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) throw Error(Errc::BadRank, "symmetric eigendecomposition failed");
  return {solver.eigenvalues().head(count), solver.eigenvectors().leftCols(count)};
}

// Orthonormalizes column j of `basis` against columns [0, j). Two passes of
// Gram-Schmidt; a column that collapses is replaced by a fresh random vector.
void orthonormalize_column(Matrix& basis, Index j, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  for (int attempt = 0; attempt < 8; ++attempt) {
    const double before = basis.col(j).norm();
    for (int pass = 0; pass < 2; ++pass) {
      if (j > 0) {
        const Vector proj = basis.leftCols(j).transpose() * basis.col(j);
        basis.col(j).noalias() -= basis.leftCols(j) * proj;
      }
    }
    const double after = basis.col(j).norm();
    if (after > 1e-10 * std::max(before, 1e-300)) {
      basis.col(j) /= after;
      return;
    }
    for (Index i = 0; i < basis.rows(); ++i) basis(i, j) = normal(rng);
  }
  throw Error(Errc::BadRank, "could not extend Krylov basis");
}

}  // namespace

Eigenpairs smallest_eigenpairs(const Matrix& sym, Index count, std::uint64_t seed) {
  const Index n = sym.rows();
  if (sym.cols() != n) throw Error(Errc::DimensionMismatch, "eigensolver needs a square matrix");
  if (count < 1 || count > n) throw Error(Errc::BadRank, "eigenpair count out of range");

  const Index block = std::min(n, count + std::max<Index>(count, 8));
  const Index blocks = std::max<Index>(2, kBasisTarget / block);
  const Index width = block * blocks;
  if (n <= kDenseLimit || width >= n / 2) return dense_smallest(sym, count);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;

  Matrix start(n, block);
  for (Index j = 0; j < block; ++j) {
    for (Index i = 0; i < n; ++i) start(i, j) = normal(rng);
  }

  Matrix basis(n, width);
  Matrix image(n, width);  // sym * basis
  const double scale = std::max(1.0, sym.cwiseAbs().rowwise().sum().maxCoeff());

  for (int cycle = 0; cycle < kMaxCycles; ++cycle) {
    basis.leftCols(block) = start;
    for (Index j = 0; j < block; ++j) orthonormalize_column(basis, j, rng);
    for (Index b = 0; b < blocks; ++b) {
      image.middleCols(b * block, block).noalias() = sym * basis.middleCols(b * block, block);
      if (b + 1 == blocks) break;
      basis.middleCols((b + 1) * block, block) = image.middleCols(b * block, block);
      for (Index j = (b + 1) * block; j < (b + 2) * block; ++j) orthonormalize_column(basis, j, rng);
    }

    Matrix projected = basis.transpose() * image;
    projected = 0.5 * (projected + projected.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> small(projected);
    if (small.info() != Eigen::Success) throw Error(Errc::BadRank, "Rayleigh-Ritz step failed");

    const Matrix coeffs = small.eigenvectors().leftCols(block);
    const Matrix ritz = basis * coeffs;
    const Matrix residual = image * coeffs - ritz * small.eigenvalues().head(block).asDiagonal();

    double worst = 0.0;
    for (Index j = 0; j < count; ++j) worst = std::max(worst, residual.col(j).norm());
    if (worst <= kTolerance * scale) {
      return {small.eigenvalues().head(count), ritz.leftCols(count)};
    }
    start = ritz;
  }
  // Not converged: pay for the dense solve rather than return loose vectors.
  return dense_smallest(sym, count);
}

}  // namespace mmselect::numerics
