#include "mmselect/synth.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "mmselect/error.hpp"

namespace mmselect::synth {

namespace {

constexpr std::array<const char*, 10> kSubjects = {"street", "kitchen", "beach",  "forest", "office",
                                                   "market", "stadium", "garden", "harbor", "museum"};
constexpr std::array<const char*, 24> kWords = {
    "the",    "a",      "scene", "shows",  "person", "table", "light",  "near",
    "large",  "small",  "with",  "and",    "people", "bright", "shadow", "corner",
    "colors", "behind", "front", "window", "object", "left",   "right",  "detail"};
constexpr std::array<const char*, 4> kPrompts = {"Describe this image in detail.",
                                                 "What is happening in this picture?",
                                                 "Write a caption for the image.",
                                                 "Explain the main objects in the scene."};

Vector gaussian_vector(Index dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Vector v(dim);
  for (Index i = 0; i < dim; ++i) v(i) = normal(rng);
  return v;
}

Vector unit(Vector v) { return v / v.norm(); }

std::string make_id(Index i, Index n) {
  const int width = static_cast<int>(std::to_string(n).size());
  char buf[32];
  std::snprintf(buf, sizeof(buf), "syn-%0*lld", width, static_cast<long long>(i));
  return buf;
}

}  // namespace

SynthCorpus synthesize(const SynthConfig& config) {
  if (config.n < 30) throw Error(Errc::BadConfig, "synthetic corpus needs n >= 30");
  if (config.topics < 1 || config.image_dim < 2 || config.text_clip_dim != config.image_dim ||
      config.text_llm_dim < 1 || !(config.noise >= 0.0)) {
    throw Error(Errc::BadConfig, "invalid synthetic corpus shape");
  }

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> pick_topic(0, config.topics - 1);
  std::uniform_int_distribution<std::size_t> pick_word(0, kWords.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_prompt(0, kPrompts.size() - 1);

  std::vector<Vector> centers;
  for (int t = 0; t < config.topics; ++t) centers.push_back(unit(gaussian_vector(config.image_dim, rng)));

  const Index n = config.n;
  Matrix image(n, config.image_dim);
  Matrix text_clip(n, config.text_clip_dim);
  Matrix text_llm(n, config.text_llm_dim);
  SynthCorpus out;
  std::vector<std::string> ids;

  for (Index i = 0; i < n; ++i) {
    const double q = normal(rng);
    const int topic = pick_topic(rng);
    auto jitter = [&] { return q + config.noise * normal(rng); };

    const Vector img = unit(centers[static_cast<std::size_t>(topic)] +
                            0.15 / std::sqrt(static_cast<double>(config.image_dim)) *
                                gaussian_vector(config.image_dim, rng));
    // Text embedding at an exact cosine s to the image.
    const double s = std::clamp(0.25 + 0.08 * jitter(), -0.95, 0.95);
    Vector side = gaussian_vector(config.text_clip_dim, rng);
    side -= side.dot(img) * img;
    side = unit(side);
    const Vector txt = s * img + std::sqrt(1.0 - s * s) * side;

    const auto words = static_cast<Index>(std::max(3.0, std::round(60.0 + 20.0 * jitter())));
    std::string response = "The " + std::string(kSubjects[static_cast<std::size_t>(topic) % kSubjects.size()]);
    for (Index w = 2; w < words; ++w) {
      response += ' ';
      response += kWords[pick_word(rng)];
    }

    const double reward = jitter();
    const double gpt = std::clamp(70.0 + 10.0 * jitter(), 0.0, 100.0);

    const std::string id = make_id(i, n);
    image.row(i) = img.transpose();
    text_clip.row(i) = txt.transpose();
    text_llm.row(i) = 0.05 * gaussian_vector(config.text_llm_dim, rng).transpose();
    out.manifest.push_back({id, "images/" + id + ".jpg", kPrompts[pick_prompt(rng)], std::move(response)});
    corpus::ScoreRecord record;
    record.reward = reward;
    record.gpt = gpt;
    out.scores.emplace(id, record);
    out.quality.push_back(q);
    out.topic.push_back(topic);
    ids.push_back(id);
  }

  out.features.add(std::string(corpus::kImageMatrix), corpus::FeatureMatrix(ids, image));
  out.features.add(std::string(corpus::kTextClipMatrix), corpus::FeatureMatrix(ids, text_clip));
  out.features.add(std::string(corpus::kTextLlmMatrix), corpus::FeatureMatrix(ids, text_llm));
  return out;
}

void write_oracle(const std::vector<std::string>& ids, const std::vector<double>& quality,
                  const std::filesystem::path& path) {
  if (ids.size() != quality.size()) throw Error(Errc::DimensionMismatch, "oracle ids and values differ in length");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  char buf[64];
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto res = std::to_chars(buf, buf + sizeof(buf), quality[i]);
    out << ids[i] << '\t' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf)) << '\n';
  }
}

void write_synth(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  corpus::write_manifest(corpus.manifest, dir / "manifest.jsonl");
  corpus::write_features(corpus.features, dir / "features");
  corpus::write_scores(corpus.scores, dir / "scores.jsonl");
  write_oracle(corpus::manifest_ids(corpus.manifest), corpus.quality, dir / "oracle.tsv");
}

}  // namespace mmselect::synth
