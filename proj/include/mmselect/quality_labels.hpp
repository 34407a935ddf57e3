#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mmselect/corpus.hpp"
#include "mmselect/types.hpp"

namespace mmselect::labels {

struct SubsetRecord {
  int subset_id = 0;
  std::vector<std::string> member_ids;  // canonical order
  Matrix embeddings;                    // one row per member
  std::optional<double> label;
};

// Balanced k-means++ into n subsets of floor(N/n) rows each. Rows of `points`
// follow `ids`; leftovers are dropped.
std::vector<SubsetRecord> build_subsets(const Matrix& points, const std::vector<std::string>& ids, int n,
                                        std::uint64_t seed);

// Fills SubsetRecord::embeddings from an embedding matrix keyed by id.
void attach_embeddings(std::vector<SubsetRecord>& subsets, const corpus::FeatureMatrix& embeddings);

// subsets.jsonl: {"subset_id": k, "members": [...]} per line.
void write_subsets(const std::vector<SubsetRecord>& subsets, const std::filesystem::path& path);
std::vector<SubsetRecord> read_subsets(const std::filesystem::path& path);

// One subset_<k>.manifest per subset for the external fine-tuning run.
void write_subset_manifests(const std::vector<SubsetRecord>& subsets, const corpus::Manifest& manifest,
                            const std::filesystem::path& dir);

struct EvalReport {
  int subset_id = 0;
  std::vector<std::pair<std::string, double>> scores;  // benchmark -> score, file order
};

double average_label(const EvalReport& report);

std::vector<EvalReport> parse_eval_reports(std::istream& in);
std::vector<EvalReport> read_eval_reports(const std::filesystem::path& path);
void write_eval_reports(const std::vector<EvalReport>& reports, const std::filesystem::path& path);

// Exactly one report per subset; duplicates and unknown ids are rejected.
std::vector<SubsetRecord> attach_labels(std::vector<SubsetRecord> subsets, std::span<const EvalReport> reports);

}  // namespace mmselect::labels
