#include <algorithm>

#include "mmselect/error.hpp"
#include "mmselect/numerics.hpp"

namespace mmselect::numerics {

PcaModel pca_fit(const Matrix& data, Index m) {
  const Index n = data.rows();
  const Index d = data.cols();
  if (n < 2) throw Error(Errc::BadRank, "PCA needs at least 2 rows");
  if (m < 1 || m > std::min(n - 1, d)) {
    throw Error(Errc::BadRank, "target dim " + std::to_string(m) + " outside [1, " +
                                   std::to_string(std::min(n - 1, d)) + "]");
  }
  if (!data.allFinite()) throw Error(Errc::NonFiniteFeature, "PCA input");

  PcaModel model;
  model.mean = data.colwise().mean().transpose();
  const Matrix centered = data.rowwise() - model.mean.transpose();
  const Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  if (solver.info() != Eigen::Success) throw Error(Errc::BadRank, "covariance eigendecomposition failed");

  model.components.resize(m, d);
  model.explained_variance.resize(m);
  for (Index i = 0; i < m; ++i) {
    const Index src = d - 1 - i;  // eigenvalues come back ascending
    Vector v = solver.eigenvectors().col(src);
    Index pivot = 0;
    v.cwiseAbs().maxCoeff(&pivot);
    if (v(pivot) < 0) v = -v;
    model.components.row(i) = v.transpose();
    model.explained_variance(i) = std::max(solver.eigenvalues()(src), 0.0);
  }
  return model;
}

Matrix pca_transform(const PcaModel& model, const Matrix& data) {
  if (data.cols() != model.input_dim()) {
    throw Error(Errc::DimensionMismatch, "PCA expects " + std::to_string(model.input_dim()) + " columns, got " +
                                             std::to_string(data.cols()));
  }
  return (data.rowwise() - model.mean.transpose()) * model.components.transpose();
}

Matrix pca_inverse_transform(const PcaModel& model, const Matrix& reduced) {
  if (reduced.cols() != model.output_dim()) {
    throw Error(Errc::DimensionMismatch, "PCA inverse expects " + std::to_string(model.output_dim()) + " columns");
  }
  return (reduced * model.components).rowwise() + model.mean.transpose();
}

}  // namespace mmselect::numerics
