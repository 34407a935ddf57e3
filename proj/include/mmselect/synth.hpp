#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mmselect/corpus.hpp"

namespace mmselect::synth {

// Planted-quality corpus. Every item has a latent quality q ~ N(0, 1); the
// CLIP cosine, response length, reward and GPT rating are each an affine
// function of q plus independent N(0, noise^2) jitter. Image features form
// `topics` well-separated directions that carry no quality signal.
struct SynthConfig {
  Index n = 3439;
  std::uint64_t seed = 0;
  int topics = 10;
  double noise = 0.5;
  Index image_dim = 32;
  Index text_clip_dim = 32;
  Index text_llm_dim = 48;
};

struct SynthCorpus {
  corpus::Manifest manifest;
  corpus::FeatureStore features;
  corpus::ScoreCache scores;     // reward and gpt only; clip and length are derived
  std::vector<double> quality;   // manifest order
  std::vector<int> topic;
};

SynthCorpus synthesize(const SynthConfig& config);

// manifest.jsonl, features/<name>.txt, scores.jsonl and oracle.tsv under dir.
void write_synth(const SynthCorpus& corpus, const std::filesystem::path& dir);

void write_oracle(const std::vector<std::string>& ids, const std::vector<double>& quality,
                  const std::filesystem::path& path);

}  // namespace mmselect::synth
