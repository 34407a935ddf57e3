#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mmselect {

enum class Errc {
  IoError,
  DuplicateId,
  MalformedRecord,
  EmptyResponse,
  MissingFeature,
  DimensionMismatch,
  NonFiniteFeature,
  ScoreOutOfRange,
  DegenerateEmbedding,
  TemplateError,
  UnparseableScore,
  TransportError,
  ScoringFailed,
  MissingScore,
  BadRank,
  BadConfig,
  TooManyClusters,
  DegenerateAffinity,
  EmptyCluster,
  EmptyReport,
  MissingLabel,
  UnknownSubset,
  DivergedTraining,
  ModelLoadError,
  InfeasibleAlpha,
  QuotaExceedsCluster,
};

std::string_view errc_name(Errc code) noexcept;

// Every module reports failures through this type. what() is "<Name>: <detail>".
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail);

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace mmselect
