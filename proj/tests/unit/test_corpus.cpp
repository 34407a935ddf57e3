#include <doctest.h>

#include <random>
#include <sstream>

#include "mmselect/corpus.hpp"
#include "mmselect/error.hpp"
#include "mmselect/synth.hpp"
#include "oracles.hpp"

using namespace mmselect;
using corpus::FeatureMatrix;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return Errc::IoError;
}

}  // namespace

TEST_CASE("manifest parsing") {
  std::istringstream one(
      R"({"id":"a","image_path":"a.jpg","instruction":"Describe this image in detail.","response":"A cat."})");
  const auto m = corpus::parse_manifest(one);
  REQUIRE(m.size() == 1);
  CHECK(m[0] == corpus::Triplet{"a", "a.jpg", "Describe this image in detail.", "A cat."});

  std::istringstream dup(R"({"id":"a","image_path":"x","instruction":"i","response":"r"}
{"id":"a","image_path":"y","instruction":"i","response":"r"})");
  CHECK(code_of([&] { corpus::parse_manifest(dup); }) == Errc::DuplicateId);

  std::istringstream missing(R"({"id":"a","instruction":"i","response":"r"})");
  CHECK(code_of([&] { corpus::parse_manifest(missing); }) == Errc::MalformedRecord);

  std::istringstream empty(R"({"id":"a","image_path":"x","instruction":"i","response":""})");
  CHECK(code_of([&] { corpus::parse_manifest(empty); }) == Errc::EmptyResponse);
}

TEST_CASE("synthetic manifest keeps file order") {
  synth::SynthConfig config;
  config.seed = 11;
  const auto syn = synth::synthesize(config);
  const auto dir = oracle::scratch_dir("manifest");
  corpus::write_manifest(syn.manifest, dir / "m.jsonl");
  const auto back = corpus::load_manifest(dir / "m.jsonl");
  REQUIRE(back.size() == 3439);
  for (std::size_t i = 0; i < back.size(); ++i) CHECK_EQ(back[i].id, syn.manifest[i].id);
  CHECK(back == syn.manifest);
  std::filesystem::remove_all(dir);
}

TEST_CASE("feature store validation") {
  const auto dir = oracle::scratch_dir("features");
  corpus::Manifest manifest{{"a", "a.jpg", "i", "r"}, {"b", "b.jpg", "i", "r"}};
  corpus::FeatureStore store;
  store.add("image", FeatureMatrix({"a", "b"}, oracle::random_matrix(2, 4, 1)));
  store.add("text_clip", FeatureMatrix({"a", "b"}, oracle::random_matrix(2, 4, 2)));
  store.add("text_llm", FeatureMatrix({"a", "b"}, oracle::random_matrix(2, 8, 3)));
  corpus::write_features(store, dir);
  const auto loaded = corpus::load_features(dir, manifest);
  CHECK(loaded.at("text_llm").dim() == 8);
  CHECK(loaded.at("image").values() == store.at("image").values());

  SUBCASE("missing row names the id and matrix") {
    corpus::write_matrix(FeatureMatrix({"a"}, oracle::random_matrix(1, 4, 4)), dir / "image.txt");
    try {
      corpus::load_features(dir, manifest);
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::MissingFeature);
      CHECK(std::string(e.what()).find("b") != std::string::npos);
      CHECK(std::string(e.what()).find("image") != std::string::npos);
    }
  }
  SUBCASE("non-finite entries") {
    std::istringstream in("id 2\na 1 nan\n");
    CHECK(code_of([&] { corpus::parse_matrix(in, "x"); }) == Errc::NonFiniteFeature);
  }
  SUBCASE("ragged rows") {
    std::istringstream in("id 2\na 1 2\nb 1\n");
    CHECK(code_of([&] { corpus::parse_matrix(in, "x"); }) == Errc::DimensionMismatch);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("matrix text round-trips exactly") {
  const auto values = oracle::random_matrix(5, 3, 9, 1e3);
  std::stringstream s;
  corpus::write_matrix(FeatureMatrix({"p", "q", "r", "s", "t"}, values), s);
  const auto back = corpus::parse_matrix(s, "mem");
  CHECK(back.values() == values);
  CHECK(back.ids()[4] == "t");
}

TEST_CASE("score cache round-trip") {
  corpus::ScoreRecord r;
  r.clip = 0.5;
  r.length = 12;
  r.reward = 1.2;
  r.gpt = 85;
  corpus::ScoreCache cache{{"a", r}};
  std::stringstream s;
  corpus::write_scores(cache, s);
  CHECK(corpus::parse_scores(s) == cache);

  std::istringstream bad(R"({"id":"a","clip":0.1,"length":3,"reward":0,"gpt":120})");
  CHECK(code_of([&] { corpus::parse_scores(bad); }) == Errc::ScoreOutOfRange);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  corpus::ScoreCache big;
  for (int i = 0; i < 1000; ++i) {
    corpus::ScoreRecord x;
    x.clip = u(rng);
    x.length = static_cast<std::int64_t>(rng() % 500);
    x.reward = 50 * u(rng);
    if (i % 7 != 0) x.gpt = 50 + 50 * u(rng);
    big.emplace("id" + std::to_string(i), x);
  }
  std::stringstream t;
  corpus::write_scores(big, t);
  const auto again = corpus::parse_scores(t);
  REQUIRE(again.size() == big.size());
  for (const auto& [id, rec] : big) {
    const auto& other = again.at(id);
    CHECK(other.length == rec.length);
    CHECK(other.gpt.has_value() == rec.gpt.has_value());
    CHECK(std::abs(*other.clip - *rec.clip) <= 1e-12 * std::abs(*rec.clip));
    CHECK(std::abs(*other.reward - *rec.reward) <= 1e-12 * std::abs(*rec.reward));
  }
}
