#pragma once

#include <memory>
#include <string>

#include "mmselect/indicators.hpp"

namespace mmselect::indicators {

// An endpoint URL split into "scheme://host[:port]" and a request path.
struct Endpoint {
  std::string origin;
  std::string path;

  static Endpoint parse(const std::string& url);
};

struct HttpOptions {
  std::string api_key;  // sent as "Authorization: Bearer <key>" when nonempty
  int timeout_seconds = 60;
};

// POST {"system": ..., "user": ...} -> {"content": ...}
class HttpRatingClient final : public RatingClient {
 public:
  HttpRatingClient(Endpoint endpoint, HttpOptions options = {});
  ~HttpRatingClient() override;
  std::string complete(const RenderedPrompt& prompt) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// POST {"question": ..., "answer": ...} -> {"score": number}
class HttpRewardClient final : public RewardClient {
 public:
  HttpRewardClient(Endpoint endpoint, HttpOptions options = {});
  ~HttpRewardClient() override;
  double score(std::string_view question, std::string_view answer) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mmselect::indicators
