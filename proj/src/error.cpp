#include "mmselect/error.hpp"

namespace mmselect {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::IoError: return "IoError";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::MalformedRecord: return "MalformedRecord";
    case Errc::EmptyResponse: return "EmptyResponse";
    case Errc::MissingFeature: return "MissingFeature";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NonFiniteFeature: return "NonFiniteFeature";
    case Errc::ScoreOutOfRange: return "ScoreOutOfRange";
    case Errc::DegenerateEmbedding: return "DegenerateEmbedding";
    case Errc::TemplateError: return "TemplateError";
    case Errc::UnparseableScore: return "UnparseableScore";
    case Errc::TransportError: return "TransportError";
    case Errc::ScoringFailed: return "ScoringFailed";
    case Errc::MissingScore: return "MissingScore";
    case Errc::BadRank: return "BadRank";
    case Errc::BadConfig: return "BadConfig";
    case Errc::TooManyClusters: return "TooManyClusters";
    case Errc::DegenerateAffinity: return "DegenerateAffinity";
    case Errc::EmptyCluster: return "EmptyCluster";
    case Errc::EmptyReport: return "EmptyReport";
    case Errc::MissingLabel: return "MissingLabel";
    case Errc::UnknownSubset: return "UnknownSubset";
    case Errc::DivergedTraining: return "DivergedTraining";
    case Errc::ModelLoadError: return "ModelLoadError";
    case Errc::InfeasibleAlpha: return "InfeasibleAlpha";
    case Errc::QuotaExceedsCluster: return "QuotaExceedsCluster";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& detail)
    : std::runtime_error(std::string(errc_name(code)) + ": " + detail),
      code_(code),
      detail_(detail) {}

}  // namespace mmselect
