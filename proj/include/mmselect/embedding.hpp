#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mmselect/corpus.hpp"
#include "mmselect/indicators.hpp"
#include "mmselect/numerics.hpp"

namespace mmselect::embedding {

inline constexpr Index kScoreSlots = 4;
inline constexpr Index kDefaultFeatureSize = 6;

// Per-column z-scoring of [clip, length, reward, gpt]. A zero std marks a
// constant column, which standardizes to 0.
struct Standardizer {
  std::array<double, 4> mean{0.0, 0.0, 0.0, 0.0};
  std::array<double, 4> stddev{1.0, 1.0, 1.0, 1.0};

  static Standardizer identity() { return {}; }
};

Standardizer fit_standardizer(std::span<const indicators::IndicatorScores> scores);
std::array<double, 4> standardize(const Standardizer& std, const indicators::IndicatorScores& s);
std::array<double, 4> destandardize(const Standardizer& std, const std::array<double, 4>& z);

enum class ReducerLayout {
  Joint,     // one PCA over [image | text_llm]
  Separate,  // ceil(m/2) image components followed by floor(m/2) text components
};

struct FeatureReducer {
  ReducerLayout layout = ReducerLayout::Joint;
  numerics::PcaModel joint;
  numerics::PcaModel image;
  numerics::PcaModel text;

  Index output_dim() const;
  Index image_dim() const;
  Index text_dim() const;
  // Rows of image_features and text_features are paired.
  Matrix reduce(const Matrix& image_features, const Matrix& text_features) const;
};

FeatureReducer fit_feature_reducer(const corpus::FeatureStore& features, const corpus::Manifest& manifest,
                                   Index m, ReducerLayout layout = ReducerLayout::Joint);

struct ItemEmbedding {
  std::string id;
  Vector values;  // [clip, length, reward, gpt, p_1..p_m]
};

ItemEmbedding assemble(const Standardizer& std, const FeatureReducer& reducer, const corpus::ScoreRecord& scores,
                       const Eigen::Ref<const Vector>& image_vec, const Eigen::Ref<const Vector>& llm_text_vec,
                       const std::string& id);

std::vector<ItemEmbedding> assemble_corpus(const corpus::Manifest& manifest, const corpus::ScoreCache& cache,
                                           const corpus::FeatureStore& features, const Standardizer& std,
                                           const FeatureReducer& reducer);

// Scores of every manifest item in order; MissingScore if any is incomplete.
std::vector<indicators::IndicatorScores> collect_scores(const corpus::Manifest& manifest,
                                                        const corpus::ScoreCache& cache);

corpus::FeatureMatrix to_matrix(const std::vector<ItemEmbedding>& items);
std::vector<ItemEmbedding> from_matrix(const corpus::FeatureMatrix& matrix);

// Standardizer + reducer parameters fitted on the selector-training corpus.
struct EmbeddingBundle {
  Standardizer standardizer;
  FeatureReducer reducer;
  bool standardized = true;
  std::string fingerprint;
};

void save_bundle(const EmbeddingBundle& bundle, const std::filesystem::path& dir);
EmbeddingBundle load_bundle(const std::filesystem::path& dir);

}  // namespace mmselect::embedding
