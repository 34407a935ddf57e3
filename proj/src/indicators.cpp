#include "mmselect/indicators.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "mmselect/error.hpp"

namespace mmselect::indicators {

namespace {

constexpr std::string_view kRatingSystem =
    "We would like to request your feedback on the performance of an AI assistant. "
    "The assistant provides a caption based on an image and an instruction.\n"
    "\n"
    "Instruction: [Instruction]\n"
    "\n"
    "Caption: [Caption]";

constexpr std::string_view kRatingUser =
    "Please rate according to the quality and variety of the caption to the instruction. "
    "Each assistant receives a score on a scale of 0 to 100, where a higher score indicates "
    "higher level of the quality and variety. Please first output a single line containing the "
    "value indicating the scores. In the subsequent line, please provide a comprehensive "
    "explanation of your evaluation, avoiding any potential bias. The instruction and caption "
    "are displayed following without image.";

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool retryable(const Error& e) {
  return e.code() == Errc::UnparseableScore || e.code() == Errc::TransportError ||
         e.code() == Errc::ScoreOutOfRange;
}

template <class Attempt>
double with_retries(const corpus::Triplet& triplet, int retries, Attempt attempt) {
  std::string last;
  for (int i = 0; i <= std::max(retries, 0); ++i) {
    try {
      return attempt();
    } catch (const Error& e) {
      if (!retryable(e)) throw;
      last = e.what();
    }
  }
  throw Error(Errc::ScoringFailed, triplet.id + " (" + last + ")");
}

}  // namespace

Indicator parse_indicator(std::string_view name) {
  if (name == "clip") return Indicator::Clip;
  if (name == "length") return Indicator::Length;
  if (name == "reward") return Indicator::Reward;
  if (name == "gpt") return Indicator::Gpt;
  throw Error(Errc::BadConfig, "unknown indicator '" + std::string(name) + "'");
}

std::string_view indicator_name(Indicator which) {
  switch (which) {
    case Indicator::Clip: return "clip";
    case Indicator::Length: return "length";
    case Indicator::Reward: return "reward";
    case Indicator::Gpt: return "gpt";
  }
  return "?";
}

double indicator_value(const IndicatorScores& scores, Indicator which) {
  switch (which) {
    case Indicator::Clip: return scores.clip;
    case Indicator::Length: return static_cast<double>(scores.length);
    case Indicator::Reward: return scores.reward;
    case Indicator::Gpt: return scores.gpt;
  }
  return 0.0;
}

double clip_score(const Eigen::Ref<const Vector>& image_vec, const Eigen::Ref<const Vector>& text_vec) {
  if (image_vec.size() != text_vec.size()) {
    throw Error(Errc::DimensionMismatch, "image dim " + std::to_string(image_vec.size()) + " vs text dim " +
                                             std::to_string(text_vec.size()));
  }
  const double ni = image_vec.norm();
  const double nt = text_vec.norm();
  if (ni == 0.0 || nt == 0.0) throw Error(Errc::DegenerateEmbedding, "zero-norm embedding");
  return std::clamp(image_vec.dot(text_vec) / (ni * nt), -1.0, 1.0);
}

std::int64_t length_score(std::string_view response) {
  std::int64_t count = 0;
  bool in_token = false;
  for (char c : response) {
    if (is_space(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++count;
    }
  }
  return count;
}

PromptTemplate PromptTemplate::rating_default() {
  return {std::string(kRatingSystem), std::string(kRatingUser)};
}

RenderedPrompt render_gpt_prompt(const PromptTemplate& tmpl, std::string_view instruction,
                                 std::string_view response) {
  const std::string_view sys = tmpl.system_template;
  if (sys.find(kInstructionSlot) == std::string_view::npos || sys.find(kCaptionSlot) == std::string_view::npos) {
    throw Error(Errc::TemplateError, "system template must contain [Instruction] and [Caption]");
  }
  if (tmpl.user_template.find(kInstructionSlot) != std::string::npos ||
      tmpl.user_template.find(kCaptionSlot) != std::string::npos) {
    throw Error(Errc::TemplateError, "user template must not contain placeholders");
  }

  RenderedPrompt out;
  out.system.reserve(sys.size() + instruction.size() + response.size());
  std::size_t pos = 0;
  while (pos < sys.size()) {
    std::string_view rest = sys.substr(pos);
    if (rest.starts_with(kInstructionSlot)) {
      out.system.append(instruction);
      pos += kInstructionSlot.size();
    } else if (rest.starts_with(kCaptionSlot)) {
      out.system.append(response);
      pos += kCaptionSlot.size();
    } else {
      out.system.push_back(sys[pos++]);
    }
  }
  out.user = tmpl.user_template;
  return out;
}

double parse_gpt_reply(std::string_view body) {
  std::string_view line;
  while (!body.empty()) {
    auto nl = body.find('\n');
    line = trim(body.substr(0, nl));
    if (!line.empty()) break;
    body = nl == std::string_view::npos ? std::string_view{} : body.substr(nl + 1);
  }
  if (line.empty()) throw Error(Errc::UnparseableScore, "empty reply");

  double value = 0.0;
  auto [end, ec] = std::from_chars(line.data(), line.data() + line.size(), value);
  if (ec != std::errc{} || end != line.data() + line.size() || !std::isfinite(value)) {
    throw Error(Errc::UnparseableScore, "first line '" + std::string(line) + "'");
  }
  if (value < 0.0 || value > 100.0) {
    throw Error(Errc::ScoreOutOfRange, std::string(line) + " not in [0,100]");
  }
  return value;
}

double gpt_score(RatingClient& client, const PromptTemplate& tmpl, const corpus::Triplet& triplet,
                 int retries) {
  const auto prompt = render_gpt_prompt(tmpl, triplet.instruction, triplet.response);
  return with_retries(triplet, retries, [&] { return parse_gpt_reply(client.complete(prompt)); });
}

double reward_score(RewardClient& client, const corpus::Triplet& triplet, int retries) {
  return with_retries(triplet, retries, [&] {
    double v = client.score(triplet.instruction, triplet.response);
    if (!std::isfinite(v)) throw Error(Errc::UnparseableScore, "non-finite reward");
    return v;
  });
}

IndicatorScores complete_scores(const corpus::ScoreRecord& record, std::string_view id) {
  auto missing = [&](const char* which) {
    return Error(Errc::MissingScore, std::string(id) + " " + which);
  };
  if (!record.clip) throw missing("clip");
  if (!record.length) throw missing("length");
  if (!record.reward) throw missing("reward");
  if (!record.gpt) throw missing("gpt");
  return {*record.clip, *record.length, *record.reward, *record.gpt};
}

namespace {

enum class Job { Reward, Gpt };

void score_into(const corpus::Manifest& manifest, const corpus::FeatureStore& features,
                const Providers& providers, corpus::ScoreCache& cache) {
  const auto& image = features.at(corpus::kImageMatrix);
  const auto& text = features.at(corpus::kTextClipMatrix);

  std::vector<std::pair<std::size_t, Job>> jobs;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& t = manifest[i];
    auto& rec = cache[t.id];
    if (!rec.clip) rec.clip = clip_score(image.row(t.id), text.row(t.id));
    if (!rec.length) rec.length = length_score(t.response);
    if (!rec.reward) {
      if (!providers.reward) throw Error(Errc::MissingScore, t.id + " reward");
      jobs.emplace_back(i, Job::Reward);
    }
    if (!rec.gpt) {
      if (!providers.rating) throw Error(Errc::MissingScore, t.id + " gpt");
      jobs.emplace_back(i, Job::Gpt);
    }
  }
  if (jobs.empty()) return;

  std::mutex cache_mutex;
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> failures(jobs.size());

  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      const auto& t = manifest[jobs[j].first];
      try {
        if (jobs[j].second == Job::Reward) {
          double v = reward_score(*providers.reward, t, providers.retries);
          std::lock_guard lock(cache_mutex);
          cache[t.id].reward = v;
        } else {
          double v = gpt_score(*providers.rating, providers.prompt, t, providers.retries);
          std::lock_guard lock(cache_mutex);
          cache[t.id].gpt = v;
        }
      } catch (...) {
        failures[j] = std::current_exception();
      }
    }
  };

  const int workers = std::clamp(providers.workers, 1, static_cast<int>(jobs.size()));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  for (auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
}

}  // namespace

corpus::ScoreCache score_corpus(const corpus::Manifest& manifest, const corpus::FeatureStore& features,
                                const Providers& providers, corpus::ScoreCache cache) {
  score_into(manifest, features, providers, cache);
  return cache;
}

void score_corpus_into(const corpus::Manifest& manifest, const corpus::FeatureStore& features,
                       const Providers& providers, corpus::ScoreCache& cache) {
  score_into(manifest, features, providers, cache);
}

}  // namespace mmselect::indicators
