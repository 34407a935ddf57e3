#include "mmselect/http_providers.hpp"

#include <httplib.h>
#include <json.hpp>

#include "mmselect/error.hpp"

namespace mmselect::indicators {

namespace {

using json = nlohmann::json;

// httplib::Client is not safe for concurrent requests; each call gets its own.
json post_json(const Endpoint& endpoint, const HttpOptions& options, const json& body) {
  httplib::Client client(endpoint.origin);
  client.set_connection_timeout(options.timeout_seconds, 0);
  client.set_read_timeout(options.timeout_seconds, 0);
  httplib::Headers headers;
  if (!options.api_key.empty()) headers.emplace("Authorization", "Bearer " + options.api_key);

  auto res = client.Post(endpoint.path, headers, body.dump(), "application/json");
  if (!res) {
    throw Error(Errc::TransportError, endpoint.origin + endpoint.path + ": " + httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) {
    throw Error(Errc::TransportError, endpoint.origin + endpoint.path + ": HTTP " + std::to_string(res->status));
  }
  try {
    return json::parse(res->body);
  } catch (const json::parse_error&) {
    throw Error(Errc::UnparseableScore, "reply body is not JSON");
  }
}

}  // namespace

Endpoint Endpoint::parse(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(Errc::BadConfig, "endpoint '" + url + "' has no scheme");
  if (url.compare(0, scheme_end, "http") != 0) {
    throw Error(Errc::BadConfig, "endpoint '" + url + "': only http:// is supported");
  }
  auto path_start = url.find('/', scheme_end + 3);
  Endpoint e;
  if (path_start == std::string::npos) {
    e.origin = url;
    e.path = "/";
  } else {
    e.origin = url.substr(0, path_start);
    e.path = url.substr(path_start);
  }
  if (e.origin.size() <= scheme_end + 3) throw Error(Errc::BadConfig, "endpoint '" + url + "' has no host");
  return e;
}

struct HttpRatingClient::Impl {
  Endpoint endpoint;
  HttpOptions options;
};

HttpRatingClient::HttpRatingClient(Endpoint endpoint, HttpOptions options)
    : impl_(std::make_unique<Impl>(Impl{std::move(endpoint), std::move(options)})) {}

HttpRatingClient::~HttpRatingClient() = default;

std::string HttpRatingClient::complete(const RenderedPrompt& prompt) {
  json reply = post_json(impl_->endpoint, impl_->options, {{"system", prompt.system}, {"user", prompt.user}});
  auto it = reply.find("content");
  if (it == reply.end() || !it->is_string()) throw Error(Errc::UnparseableScore, "reply has no 'content'");
  return it->get<std::string>();
}

struct HttpRewardClient::Impl {
  Endpoint endpoint;
  HttpOptions options;
};

HttpRewardClient::HttpRewardClient(Endpoint endpoint, HttpOptions options)
    : impl_(std::make_unique<Impl>(Impl{std::move(endpoint), std::move(options)})) {}

HttpRewardClient::~HttpRewardClient() = default;

double HttpRewardClient::score(std::string_view question, std::string_view answer) {
  json reply = post_json(impl_->endpoint, impl_->options, {{"question", question}, {"answer", answer}});
  auto it = reply.find("score");
  if (it == reply.end() || !it->is_number()) throw Error(Errc::UnparseableScore, "reply has no numeric 'score'");
  return it->get<double>();
}

}  // namespace mmselect::indicators
