#include "mmselect/embedding.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "mmselect/error.hpp"

namespace mmselect::embedding {

namespace {

using json = nlohmann::json;
constexpr int kBundleVersion = 1;

std::array<double, 4> as_array(const indicators::IndicatorScores& s) {
  return {s.clip, static_cast<double>(s.length), s.reward, s.gpt};
}

json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const json& j) {
  auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

json pca_to_json(const numerics::PcaModel& m) {
  json rows = json::array();
  for (Index r = 0; r < m.components.rows(); ++r) rows.push_back(vector_to_json(m.components.row(r).transpose()));
  return {{"mean", vector_to_json(m.mean)},
          {"components", rows},
          {"explained_variance", vector_to_json(m.explained_variance)}};
}

numerics::PcaModel pca_from_json(const json& j) {
  numerics::PcaModel m;
  m.mean = vector_from_json(j.at("mean"));
  m.explained_variance = vector_from_json(j.at("explained_variance"));
  const auto& rows = j.at("components");
  m.components.resize(static_cast<Index>(rows.size()), m.mean.size());
  for (Index r = 0; r < m.components.rows(); ++r) {
    Vector row = vector_from_json(rows[static_cast<std::size_t>(r)]);
    if (row.size() != m.mean.size()) throw Error(Errc::ModelLoadError, "PCA component width mismatch");
    m.components.row(r) = row.transpose();
  }
  return m;
}

Matrix hstack(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

}  // namespace

Standardizer fit_standardizer(std::span<const indicators::IndicatorScores> scores) {
  if (scores.empty()) throw Error(Errc::BadConfig, "cannot fit a standardizer on zero rows");
  const double n = static_cast<double>(scores.size());
  Standardizer out;
  out.mean.fill(0.0);
  for (const auto& s : scores) {
    auto v = as_array(s);
    for (std::size_t c = 0; c < 4; ++c) out.mean[c] += v[c];
  }
  for (auto& m : out.mean) m /= n;
  std::array<double, 4> ss{0.0, 0.0, 0.0, 0.0};
  for (const auto& s : scores) {
    auto v = as_array(s);
    for (std::size_t c = 0; c < 4; ++c) ss[c] += (v[c] - out.mean[c]) * (v[c] - out.mean[c]);
  }
  for (std::size_t c = 0; c < 4; ++c) out.stddev[c] = std::sqrt(ss[c] / n);
  return out;
}

std::array<double, 4> standardize(const Standardizer& std, const indicators::IndicatorScores& s) {
  auto v = as_array(s);
  for (std::size_t c = 0; c < 4; ++c) v[c] = std.stddev[c] > 0.0 ? (v[c] - std.mean[c]) / std.stddev[c] : 0.0;
  return v;
}

std::array<double, 4> destandardize(const Standardizer& std, const std::array<double, 4>& z) {
  std::array<double, 4> v{};
  for (std::size_t c = 0; c < 4; ++c) v[c] = std.stddev[c] > 0.0 ? z[c] * std.stddev[c] + std.mean[c] : std.mean[c];
  return v;
}

Index FeatureReducer::output_dim() const {
  return layout == ReducerLayout::Joint ? joint.output_dim() : image.output_dim() + text.output_dim();
}

Index FeatureReducer::image_dim() const {
  return layout == ReducerLayout::Joint ? joint.input_dim() : image.input_dim();
}

Index FeatureReducer::text_dim() const {
  return layout == ReducerLayout::Joint ? 0 : text.input_dim();
}

Matrix FeatureReducer::reduce(const Matrix& image_features, const Matrix& text_features) const {
  if (image_features.rows() != text_features.rows()) {
    throw Error(Errc::DimensionMismatch, "image and text feature row counts differ");
  }
  if (layout == ReducerLayout::Joint) return numerics::pca_transform(joint, hstack(image_features, text_features));
  return hstack(numerics::pca_transform(image, image_features), numerics::pca_transform(text, text_features));
}

FeatureReducer fit_feature_reducer(const corpus::FeatureStore& features, const corpus::Manifest& manifest, Index m,
                                   ReducerLayout layout) {
  const auto ids = corpus::manifest_ids(manifest);
  const Matrix image = features.at(corpus::kImageMatrix).gather(ids, corpus::kImageMatrix);
  const Matrix text = features.at(corpus::kTextLlmMatrix).gather(ids, corpus::kTextLlmMatrix);
  FeatureReducer out;
  out.layout = layout;
  if (layout == ReducerLayout::Joint) {
    out.joint = numerics::pca_fit(hstack(image, text), m);
  } else {
    if (m < 2) throw Error(Errc::BadRank, "separate reduction needs m >= 2");
    out.image = numerics::pca_fit(image, (m + 1) / 2);
    out.text = numerics::pca_fit(text, m / 2);
  }
  return out;
}

ItemEmbedding assemble(const Standardizer& std, const FeatureReducer& reducer, const corpus::ScoreRecord& scores,
                       const Eigen::Ref<const Vector>& image_vec, const Eigen::Ref<const Vector>& llm_text_vec,
                       const std::string& id) {
  const auto complete = indicators::complete_scores(scores, id);
  const Matrix reduced = reducer.reduce(image_vec.transpose(), llm_text_vec.transpose());
  ItemEmbedding out{id, Vector(kScoreSlots + reduced.cols())};
  const auto z = standardize(std, complete);
  for (Index c = 0; c < kScoreSlots; ++c) out.values(c) = z[static_cast<std::size_t>(c)];
  out.values.tail(reduced.cols()) = reduced.row(0).transpose();
  if (!out.values.allFinite()) throw Error(Errc::NonFiniteFeature, "embedding of " + id);
  return out;
}

std::vector<indicators::IndicatorScores> collect_scores(const corpus::Manifest& manifest,
                                                        const corpus::ScoreCache& cache) {
  std::vector<indicators::IndicatorScores> out;
  out.reserve(manifest.size());
  for (const auto& t : manifest) {
    auto it = cache.find(t.id);
    if (it == cache.end()) throw Error(Errc::MissingScore, t.id + " (no cache row)");
    out.push_back(indicators::complete_scores(it->second, t.id));
  }
  return out;
}

std::vector<ItemEmbedding> assemble_corpus(const corpus::Manifest& manifest, const corpus::ScoreCache& cache,
                                           const corpus::FeatureStore& features, const Standardizer& std,
                                           const FeatureReducer& reducer) {
  const auto scores = collect_scores(manifest, cache);
  const auto ids = corpus::manifest_ids(manifest);
  const Matrix image = features.at(corpus::kImageMatrix).gather(ids, corpus::kImageMatrix);
  const Matrix text = features.at(corpus::kTextLlmMatrix).gather(ids, corpus::kTextLlmMatrix);
  const Matrix reduced = reducer.reduce(image, text);

  std::vector<ItemEmbedding> out;
  out.reserve(manifest.size());
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    ItemEmbedding e{ids[i], Vector(kScoreSlots + reduced.cols())};
    const auto z = standardize(std, scores[i]);
    for (Index c = 0; c < kScoreSlots; ++c) e.values(c) = z[static_cast<std::size_t>(c)];
    e.values.tail(reduced.cols()) = reduced.row(static_cast<Index>(i)).transpose();
    if (!e.values.allFinite()) throw Error(Errc::NonFiniteFeature, "embedding of " + e.id);
    out.push_back(std::move(e));
  }
  return out;
}

corpus::FeatureMatrix to_matrix(const std::vector<ItemEmbedding>& items) {
  std::vector<std::string> ids;
  const Index dim = items.empty() ? 0 : items.front().values.size();
  Matrix values(static_cast<Index>(items.size()), dim);
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].values.size() != dim) throw Error(Errc::DimensionMismatch, "embedding " + items[i].id);
    ids.push_back(items[i].id);
    values.row(static_cast<Index>(i)) = items[i].values.transpose();
  }
  return corpus::FeatureMatrix(std::move(ids), std::move(values));
}

std::vector<ItemEmbedding> from_matrix(const corpus::FeatureMatrix& matrix) {
  std::vector<ItemEmbedding> out;
  out.reserve(static_cast<std::size_t>(matrix.rows()));
  for (Index r = 0; r < matrix.rows(); ++r) out.push_back({matrix.ids()[r], matrix.values().row(r).transpose()});
  return out;
}

void save_bundle(const EmbeddingBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json j;
  j["format_version"] = kBundleVersion;
  j["standardized"] = bundle.standardized;
  j["standardizer"] = {{"mean", bundle.standardizer.mean}, {"stddev", bundle.standardizer.stddev}};
  j["layout"] = bundle.reducer.layout == ReducerLayout::Joint ? "joint" : "separate";
  if (bundle.reducer.layout == ReducerLayout::Joint) {
    j["joint"] = pca_to_json(bundle.reducer.joint);
  } else {
    j["image"] = pca_to_json(bundle.reducer.image);
    j["text"] = pca_to_json(bundle.reducer.text);
  }
  j["fingerprint"] = bundle.fingerprint;
  std::ofstream out(dir / "embedding.json", std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + (dir / "embedding.json").string());
  out << j.dump(1) << '\n';
}

EmbeddingBundle load_bundle(const std::filesystem::path& dir) {
  std::ifstream in(dir / "embedding.json", std::ios::binary);
  if (!in) throw Error(Errc::ModelLoadError, "missing " + (dir / "embedding.json").string());
  try {
    json j = json::parse(in);
    if (j.at("format_version").get<int>() != kBundleVersion) {
      throw Error(Errc::ModelLoadError, "embedding bundle version " + j.at("format_version").dump() +
                                            ", expected " + std::to_string(kBundleVersion));
    }
    EmbeddingBundle b;
    b.standardized = j.at("standardized").get<bool>();
    b.standardizer.mean = j.at("standardizer").at("mean").get<std::array<double, 4>>();
    b.standardizer.stddev = j.at("standardizer").at("stddev").get<std::array<double, 4>>();
    const auto layout = j.at("layout").get<std::string>();
    if (layout == "joint") {
      b.reducer.layout = ReducerLayout::Joint;
      b.reducer.joint = pca_from_json(j.at("joint"));
    } else if (layout == "separate") {
      b.reducer.layout = ReducerLayout::Separate;
      b.reducer.image = pca_from_json(j.at("image"));
      b.reducer.text = pca_from_json(j.at("text"));
    } else {
      throw Error(Errc::ModelLoadError, "unknown reducer layout '" + layout + "'");
    }
    b.fingerprint = j.value("fingerprint", "");
    return b;
  } catch (const json::exception& e) {
    throw Error(Errc::ModelLoadError, std::string("embedding bundle: ") + e.what());
  }
}

}  // namespace mmselect::embedding
