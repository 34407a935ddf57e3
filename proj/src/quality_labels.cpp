#include "mmselect/quality_labels.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "mmselect/error.hpp"
#include "mmselect/numerics.hpp"

namespace mmselect::labels {

namespace {

using json = nlohmann::json;

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  return out;
}

}  // namespace

std::vector<SubsetRecord> build_subsets(const Matrix& points, const std::vector<std::string>& ids, int n,
                                        std::uint64_t seed) {
  const Index rows = points.rows();
  if (static_cast<Index>(ids.size()) != rows) throw Error(Errc::DimensionMismatch, "ids vs subset points");
  if (n < 1) throw Error(Errc::BadConfig, "subset count must be positive");
  if (n > rows) throw Error(Errc::TooManyClusters, std::to_string(n) + " subsets for " + std::to_string(rows) + " rows");

  numerics::KMeansOptions options;
  options.balanced = true;
  options.capacity = rows / n;
  const auto assignment = numerics::kmeans_pp(points, n, seed, options);

  std::vector<SubsetRecord> out(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) out[k].subset_id = k;
  std::vector<std::vector<Index>> rows_of(static_cast<std::size_t>(n));
  for (Index i = 0; i < rows; ++i) {
    const int label = assignment.labels[static_cast<std::size_t>(i)];
    if (label < 0) continue;
    out[label].member_ids.push_back(ids[static_cast<std::size_t>(i)]);
    rows_of[label].push_back(i);
  }
  for (int k = 0; k < n; ++k) {
    out[k].embeddings.resize(static_cast<Index>(rows_of[k].size()), points.cols());
    for (std::size_t r = 0; r < rows_of[k].size(); ++r) out[k].embeddings.row(static_cast<Index>(r)) = points.row(rows_of[k][r]);
  }
  return out;
}

void attach_embeddings(std::vector<SubsetRecord>& subsets, const corpus::FeatureMatrix& embeddings) {
  for (auto& s : subsets) s.embeddings = embeddings.gather(s.member_ids, "embeddings");
}

void write_subsets(const std::vector<SubsetRecord>& subsets, const std::filesystem::path& path) {
  auto out = open_output(path);
  for (const auto& s : subsets) {
    json record = {{"subset_id", s.subset_id}, {"members", s.member_ids}};
    out << record.dump() << '\n';
  }
}

std::vector<SubsetRecord> read_subsets(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<SubsetRecord> out;
  std::set<std::string> seen;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json record = json::parse(line);
      SubsetRecord s;
      s.subset_id = record.at("subset_id").get<int>();
      s.member_ids = record.at("members").get<std::vector<std::string>>();
      for (const auto& id : s.member_ids) {
        if (!seen.insert(id).second) throw Error(Errc::DuplicateId, id + " appears in two subsets");
      }
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw Error(Errc::MalformedRecord, path.string() + ": " + e.what());
    }
  }
  return out;
}

void write_subset_manifests(const std::vector<SubsetRecord>& subsets, const corpus::Manifest& manifest,
                            const std::filesystem::path& dir) {
  std::map<std::string, const corpus::Triplet*, std::less<>> by_id;
  for (const auto& t : manifest) by_id.emplace(t.id, &t);
  for (const auto& s : subsets) {
    corpus::Manifest part;
    for (const auto& id : s.member_ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw Error(Errc::MissingFeature, id + " not in manifest");
      part.push_back(*it->second);
    }
    corpus::write_manifest(part, dir / ("subset_" + std::to_string(s.subset_id) + ".manifest"));
  }
}

double average_label(const EvalReport& report) {
  if (report.scores.empty()) throw Error(Errc::EmptyReport, "subset " + std::to_string(report.subset_id));
  double sum = 0.0;
  for (const auto& [name, value] : report.scores) sum += value;
  return sum / static_cast<double>(report.scores.size());
}

std::vector<EvalReport> parse_eval_reports(std::istream& in) {
  std::vector<EvalReport> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto record = nlohmann::ordered_json::parse(line);
      EvalReport r;
      r.subset_id = record.at("subset_id").get<int>();
      for (const auto& [name, value] : record.at("scores").items()) {
        double v = value.get<double>();
        if (!std::isfinite(v)) throw Error(Errc::MalformedRecord, "non-finite benchmark score " + name);
        r.scores.emplace_back(name, v);
      }
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw Error(Errc::MalformedRecord, "eval report line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<EvalReport> read_eval_reports(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_eval_reports(in);
}

void write_eval_reports(const std::vector<EvalReport>& reports, const std::filesystem::path& path) {
  auto out = open_output(path);
  for (const auto& r : reports) {
    auto scores = nlohmann::ordered_json::object();
    for (const auto& [name, value] : r.scores) scores[name] = value;
    nlohmann::ordered_json record;
    record["subset_id"] = r.subset_id;
    record["scores"] = scores;
    out << record.dump() << '\n';
  }
}

std::vector<SubsetRecord> attach_labels(std::vector<SubsetRecord> subsets, std::span<const EvalReport> reports) {
  std::map<int, std::size_t> position;
  for (std::size_t i = 0; i < subsets.size(); ++i) position.emplace(subsets[i].subset_id, i);

  std::set<int> labelled;
  for (const auto& r : reports) {
    auto it = position.find(r.subset_id);
    if (it == position.end()) throw Error(Errc::UnknownSubset, "report for unknown subset " + std::to_string(r.subset_id));
    if (!labelled.insert(r.subset_id).second) {
      throw Error(Errc::UnknownSubset, "duplicate report for subset " + std::to_string(r.subset_id));
    }
    subsets[it->second].label = average_label(r);
  }
  for (const auto& s : subsets) {
    if (!labelled.count(s.subset_id)) throw Error(Errc::MissingLabel, "subset " + std::to_string(s.subset_id));
  }
  return subsets;
}

}  // namespace mmselect::labels
