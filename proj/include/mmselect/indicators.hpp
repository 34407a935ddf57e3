#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "mmselect/corpus.hpp"
#include "mmselect/types.hpp"

namespace mmselect::indicators {

// The four per-sample indicators, in embedding slot order.
struct IndicatorScores {
  double clip = 0.0;
  std::int64_t length = 0;
  double reward = 0.0;
  double gpt = 0.0;
};

enum class Indicator { Clip, Length, Reward, Gpt };

Indicator parse_indicator(std::string_view name);
std::string_view indicator_name(Indicator which);
double indicator_value(const IndicatorScores& scores, Indicator which);

// Cosine of the image and response-text embeddings, clamped to [-1, 1].
double clip_score(const Eigen::Ref<const Vector>& image_vec, const Eigen::Ref<const Vector>& text_vec);

// Number of whitespace-delimited tokens.
std::int64_t length_score(std::string_view response);

struct PromptTemplate {
  std::string system_template;
  std::string user_template;

  static PromptTemplate rating_default();
};

struct RenderedPrompt {
  std::string system;
  std::string user;
};

inline constexpr std::string_view kInstructionSlot = "[Instruction]";
inline constexpr std::string_view kCaptionSlot = "[Caption]";

// Single-pass substitution: text inserted into one slot is never rescanned.
RenderedPrompt render_gpt_prompt(const PromptTemplate& tmpl, std::string_view instruction,
                                 std::string_view response);

// First nonempty line must be a number in [0, 100].
double parse_gpt_reply(std::string_view body);

class RatingClient {
 public:
  virtual ~RatingClient() = default;
  // Returns the raw reply content. Transport problems throw Error(TransportError).
  virtual std::string complete(const RenderedPrompt& prompt) = 0;
};

class RewardClient {
 public:
  virtual ~RewardClient() = default;
  virtual double score(std::string_view question, std::string_view answer) = 0;
};

// One attempt plus up to `retries` more on unparseable replies or transport errors.
double gpt_score(RatingClient& client, const PromptTemplate& tmpl, const corpus::Triplet& triplet,
                 int retries);
double reward_score(RewardClient& client, const corpus::Triplet& triplet, int retries);

// Null clients mean cache-only mode for that indicator.
struct Providers {
  RatingClient* rating = nullptr;
  RewardClient* reward = nullptr;
  PromptTemplate prompt = PromptTemplate::rating_default();
  int retries = 3;
  int workers = 1;
};

// Fills every missing indicator. Existing cache entries are never recomputed.
corpus::ScoreCache score_corpus(const corpus::Manifest& manifest, const corpus::FeatureStore& features,
                                const Providers& providers, corpus::ScoreCache cache);

// In-place variant: on failure `cache` keeps every score obtained so far.
void score_corpus_into(const corpus::Manifest& manifest, const corpus::FeatureStore& features,
                       const Providers& providers, corpus::ScoreCache& cache);

// Throws MissingScore(id, indicator) for an incomplete record.
IndicatorScores complete_scores(const corpus::ScoreRecord& record, std::string_view id);

}  // namespace mmselect::indicators
