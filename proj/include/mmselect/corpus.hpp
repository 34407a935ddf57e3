#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mmselect/types.hpp"

namespace mmselect::corpus {

// One instruction sample. image_ref is opaque; images are never opened.
struct Triplet {
  std::string id;
  std::string image_ref;
  std::string instruction;
  std::string response;

  bool operator==(const Triplet&) const = default;
};

// Manifest order is the canonical order used for every downstream tie-break.
using Manifest = std::vector<Triplet>;

Manifest parse_manifest(std::istream& in);
Manifest load_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, std::ostream& out);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

std::vector<std::string> manifest_ids(const Manifest& manifest);

// Rows keyed by id, fixed column count. Text format: header "id <dim>",
// then one "id v1 ... vdim" line per row.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::vector<std::string> ids, Matrix values);

  Index rows() const { return values_.rows(); }
  Index dim() const { return values_.cols(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const Matrix& values() const { return values_; }

  bool contains(std::string_view id) const;
  std::optional<Index> find(std::string_view id) const;
  Eigen::Ref<const Vector> row(std::string_view id) const;

  // Rows gathered in the order of `ids`; throws MissingFeature(id, name).
  Matrix gather(const std::vector<std::string>& ids, std::string_view name) const;

 private:
  std::vector<std::string> ids_;
  Matrix values_;
  std::unordered_map<std::string, Index> index_;
};

FeatureMatrix parse_matrix(std::istream& in, std::string_view source);
FeatureMatrix read_matrix(const std::filesystem::path& path);
void write_matrix(const FeatureMatrix& matrix, std::ostream& out);
void write_matrix(const FeatureMatrix& matrix, const std::filesystem::path& path);

inline constexpr std::string_view kImageMatrix = "image";
inline constexpr std::string_view kTextClipMatrix = "text_clip";
inline constexpr std::string_view kTextLlmMatrix = "text_llm";

// Named feature matrices. Immutable once loaded.
class FeatureStore {
 public:
  void add(std::string name, FeatureMatrix matrix);
  bool has(std::string_view name) const;
  const FeatureMatrix& at(std::string_view name) const;
  std::vector<std::string> names() const;

  // Checks that every manifest id has a row in every required matrix.
  void validate(const Manifest& manifest) const;

 private:
  std::map<std::string, FeatureMatrix, std::less<>> matrices_;
};

// Reads <dir>/<name>.txt for image, text_clip and text_llm.
FeatureStore load_features(const std::filesystem::path& dir, const Manifest& manifest);
void write_features(const FeatureStore& store, const std::filesystem::path& dir);

// A cache row may be partial; completeness is checked where scores are used.
struct ScoreRecord {
  std::optional<double> clip;
  std::optional<std::int64_t> length;
  std::optional<double> reward;
  std::optional<double> gpt;

  bool complete() const { return clip && length && reward && gpt; }
  bool operator==(const ScoreRecord&) const = default;
};

using ScoreCache = std::map<std::string, ScoreRecord, std::less<>>;

ScoreCache parse_scores(std::istream& in);
ScoreCache read_scores(const std::filesystem::path& path);
void write_scores(const ScoreCache& cache, std::ostream& out);
void write_scores(const ScoreCache& cache, const std::filesystem::path& path);

}  // namespace mmselect::corpus
