#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmselect/corpus.hpp"
#include "mmselect/embedding.hpp"
#include "mmselect/indicators.hpp"
#include "mmselect/selector.hpp"

namespace mmselect::curate {

// Largest-remainder apportionment of alpha * size_i / total. Remainder ties
// go to the lower cluster index; quota_i never exceeds size_i.
std::vector<Index> allocate(std::span<const Index> cluster_sizes, Index alpha);

struct ScoredId {
  std::string id;
  double score = 0.0;
};

// Positions of the k best scores; `scores` is in canonical order and ties
// prefer the earlier position. Output is by descending score, then position.
std::vector<Index> select_topk_positions(std::span<const double> scores, Index k);
std::vector<std::string> select_topk(std::span<const ScoredId> scored, Index k);

struct CurationConfig {
  int clusters = 10;
  Index alpha = 200;
  std::uint64_t seed = 0;
  bool clustering_enabled = true;

  void validate(Index corpus_size) const;
};

struct SelectionResult {
  std::vector<std::string> ids;                 // canonical order
  std::vector<int> labels;                      // cluster per item
  std::vector<double> scores;                   // F(e(x)) or the substituted indicator
  std::vector<Index> cluster_sizes;
  std::vector<Index> quotas;
  std::vector<std::vector<std::string>> per_cluster;  // S_i, best first
  std::vector<std::string> selected;            // S in canonical order
};

// Stratified top-k given precomputed item scores and the image feature rows
// (same order as ids).
SelectionResult curate_scored(const std::vector<std::string>& ids, const Matrix& image_features,
                              std::span<const double> scores, const CurationConfig& config);

// Per-item selector scores on length-1 sequences, then stratified top-k.
SelectionResult curate(const corpus::Manifest& manifest, const corpus::FeatureStore& features,
                       const std::vector<embedding::ItemEmbedding>& embeddings, const selector::SelectorModel& model,
                       const CurationConfig& config);

// Single-indicator ablation: the raw indicator replaces the selector score.
SelectionResult curate_by_indicator(const corpus::Manifest& manifest, const corpus::FeatureStore& features,
                                    const corpus::ScoreCache& cache, indicators::Indicator which,
                                    const CurationConfig& config);

enum class Judgment { Win, Tie, Loss };
enum class Outcome { Win, Tie, Fail };

Judgment parse_judgment(std::string_view text);
std::string_view outcome_name(Outcome outcome);

// Combines the judgments from the two presentation orders.
Outcome aggregate_judgments(Judgment first_order, Judgment second_order);

// ---- reporting -------------------------------------------------------------

struct QualityComparison {
  double selected_mean = 0.0;
  double selected_variance = 0.0;
  double random_mean = 0.0;
  double random_variance = 0.0;
  double pooled_standard_error = 0.0;
  double uplift = 0.0;                                 // selected_mean - random_mean
  double uplift_in_standard_errors = 0.0;
  std::vector<std::vector<std::string>> baselines;     // random id lists
};

// Compares S against `count` random subsets of the same size drawn with
// seeds seed, seed+1, ...
QualityComparison compare_with_random(const std::vector<std::string>& selected, const std::vector<std::string>& all_ids,
                                      const std::map<std::string, double, std::less<>>& quality, int count,
                                      std::uint64_t seed);

std::map<std::string, double, std::less<>> read_oracle(const std::filesystem::path& path);

void write_result(const SelectionResult& result, const std::filesystem::path& path);
SelectionResult read_result(const std::filesystem::path& path);

struct ReportOptions {
  std::optional<std::map<std::string, double, std::less<>>> oracle;
  int baselines = 20;
  std::uint64_t seed = 0;
  int histogram_bins = 20;
};

// Writes selected.manifest, quotas.tsv, cluster_<i>.svg and, with an oracle,
// comparison.json plus baseline_<j>.ids.
std::optional<QualityComparison> write_report(const SelectionResult& result, const corpus::Manifest& manifest,
                                              const std::filesystem::path& dir, const ReportOptions& options);

}  // namespace mmselect::curate
