#include "mmselect/corpus.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "mmselect/error.hpp"

namespace mmselect::corpus {

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

bool blank(std::string_view line) {
  return line.find_first_not_of(" \t\r") == std::string_view::npos;
}

std::string required_string(const json& record, const char* key, std::size_t line_no) {
  auto it = record.find(key);
  if (it == record.end() || !it->is_string()) {
    throw Error(Errc::MalformedRecord,
                "line " + std::to_string(line_no) + ": missing string field '" + key + "'");
  }
  return it->get<std::string>();
}

void append_double(std::string& out, double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, end);
}

std::optional<double> optional_real(const json& record, const char* key, const std::string& id) {
  auto it = record.find(key);
  if (it == record.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw Error(Errc::MalformedRecord, "score '" + std::string(key) + "' of " + id);
  double v = it->get<double>();
  if (!std::isfinite(v)) throw Error(Errc::MalformedRecord, "non-finite '" + std::string(key) + "' of " + id);
  return v;
}

}  // namespace

Manifest parse_manifest(std::istream& in) {
  Manifest out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(Errc::MalformedRecord, "line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!record.is_object()) {
      throw Error(Errc::MalformedRecord, "line " + std::to_string(line_no) + ": not an object");
    }
    Triplet t{required_string(record, "id", line_no), required_string(record, "image_path", line_no),
              required_string(record, "instruction", line_no),
              required_string(record, "response", line_no)};
    if (t.id.empty()) throw Error(Errc::MalformedRecord, "line " + std::to_string(line_no) + ": empty id");
    if (t.response.empty()) throw Error(Errc::EmptyResponse, t.id);
    if (!seen.insert(t.id).second) throw Error(Errc::DuplicateId, t.id);
    out.push_back(std::move(t));
  }
  return out;
}

Manifest load_manifest(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_manifest(in);
}

void write_manifest(const Manifest& manifest, std::ostream& out) {
  for (const auto& t : manifest) {
    json record = {{"id", t.id},
                   {"image_path", t.image_ref},
                   {"instruction", t.instruction},
                   {"response", t.response}};
    out << record.dump() << '\n';
  }
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  auto out = open_output(path);
  write_manifest(manifest, out);
}

std::vector<std::string> manifest_ids(const Manifest& manifest) {
  std::vector<std::string> ids;
  ids.reserve(manifest.size());
  for (const auto& t : manifest) ids.push_back(t.id);
  return ids;
}

// ---------------------------------------------------------------------------

FeatureMatrix::FeatureMatrix(std::vector<std::string> ids, Matrix values)
    : ids_(std::move(ids)), values_(std::move(values)) {
  if (static_cast<Index>(ids_.size()) != values_.rows()) {
    throw Error(Errc::DimensionMismatch, "id count does not match row count");
  }
  index_.reserve(ids_.size());
  for (Index i = 0; i < static_cast<Index>(ids_.size()); ++i) {
    if (!index_.emplace(ids_[i], i).second) throw Error(Errc::DuplicateId, ids_[i]);
  }
  if (!values_.allFinite()) throw Error(Errc::NonFiniteFeature, "matrix contains NaN or Inf");
}

bool FeatureMatrix::contains(std::string_view id) const { return find(id).has_value(); }

std::optional<Index> FeatureMatrix::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Eigen::Ref<const Vector> FeatureMatrix::row(std::string_view id) const {
  auto i = find(id);
  if (!i) throw Error(Errc::MissingFeature, std::string(id));
  return values_.row(*i).transpose();
}

Matrix FeatureMatrix::gather(const std::vector<std::string>& ids, std::string_view name) const {
  Matrix out(static_cast<Index>(ids.size()), dim());
  for (Index r = 0; r < out.rows(); ++r) {
    auto i = find(ids[r]);
    if (!i) throw Error(Errc::MissingFeature, ids[r] + " in " + std::string(name));
    out.row(r) = values_.row(*i);
  }
  return out;
}

FeatureMatrix parse_matrix(std::istream& in, std::string_view source) {
  const std::string where(source);
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::MalformedRecord, where + ": missing header");
  std::istringstream header(line);
  std::string tag;
  long long dim = -1;
  if (!(header >> tag >> dim) || tag != "id" || dim < 0) {
    throw Error(Errc::MalformedRecord, where + ": header must be 'id <dim>'");
  }

  std::vector<std::string> ids;
  std::vector<double> flat;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    std::istringstream row(line);
    std::string id;
    row >> id;
    std::string token;
    long long count = 0;
    while (row >> token) {
      char* end = nullptr;
      double v = std::strtod(token.c_str(), &end);
      if (end != token.c_str() + token.size()) {
        throw Error(Errc::MalformedRecord, where + ":" + std::to_string(line_no) + ": bad number '" + token + "'");
      }
      if (!std::isfinite(v)) throw Error(Errc::NonFiniteFeature, where + ": row " + id);
      flat.push_back(v);
      ++count;
    }
    if (count != dim) {
      throw Error(Errc::DimensionMismatch, where + ": row " + id + " has " + std::to_string(count) +
                                               " values, expected " + std::to_string(dim));
    }
    ids.push_back(std::move(id));
  }
  Matrix values(static_cast<Index>(ids.size()), static_cast<Index>(dim));
  for (Index r = 0; r < values.rows(); ++r) {
    for (Index c = 0; c < values.cols(); ++c) values(r, c) = flat[static_cast<std::size_t>(r * dim + c)];
  }
  return FeatureMatrix(std::move(ids), std::move(values));
}

FeatureMatrix read_matrix(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_matrix(in, path.string());
}

void write_matrix(const FeatureMatrix& matrix, std::ostream& out) {
  out << "id " << matrix.dim() << '\n';
  std::string line;
  for (Index r = 0; r < matrix.rows(); ++r) {
    line = matrix.ids()[r];
    for (Index c = 0; c < matrix.dim(); ++c) {
      line.push_back(' ');
      append_double(line, matrix.values()(r, c));
    }
    line.push_back('\n');
    out << line;
  }
}

void write_matrix(const FeatureMatrix& matrix, const std::filesystem::path& path) {
  auto out = open_output(path);
  write_matrix(matrix, out);
}

// ---------------------------------------------------------------------------

void FeatureStore::add(std::string name, FeatureMatrix matrix) {
  matrices_.insert_or_assign(std::move(name), std::move(matrix));
}

bool FeatureStore::has(std::string_view name) const { return matrices_.find(name) != matrices_.end(); }

const FeatureMatrix& FeatureStore::at(std::string_view name) const {
  auto it = matrices_.find(name);
  if (it == matrices_.end()) throw Error(Errc::MissingFeature, "matrix " + std::string(name));
  return it->second;
}

std::vector<std::string> FeatureStore::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : matrices_) out.push_back(name);
  return out;
}

void FeatureStore::validate(const Manifest& manifest) const {
  for (auto name : {kImageMatrix, kTextClipMatrix, kTextLlmMatrix}) {
    const auto& m = at(name);
    for (const auto& t : manifest) {
      if (!m.contains(t.id)) throw Error(Errc::MissingFeature, t.id + " in " + std::string(name));
    }
  }
}

FeatureStore load_features(const std::filesystem::path& dir, const Manifest& manifest) {
  FeatureStore store;
  for (auto name : {kImageMatrix, kTextClipMatrix, kTextLlmMatrix}) {
    auto path = dir / (std::string(name) + ".txt");
    if (!std::filesystem::exists(path)) {
      throw Error(Errc::MissingFeature, "matrix " + std::string(name) + " (" + path.string() + ")");
    }
    store.add(std::string(name), read_matrix(path));
  }
  store.validate(manifest);
  return store;
}

void write_features(const FeatureStore& store, const std::filesystem::path& dir) {
  for (const auto& name : store.names()) write_matrix(store.at(name), dir / (name + ".txt"));
}

// ---------------------------------------------------------------------------

ScoreCache parse_scores(std::istream& in) {
  ScoreCache cache;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(Errc::MalformedRecord, "score cache line " + std::to_string(line_no) + ": " + e.what());
    }
    std::string id = required_string(record, "id", line_no);
    ScoreRecord rec;
    rec.clip = optional_real(record, "clip", id);
    rec.reward = optional_real(record, "reward", id);
    rec.gpt = optional_real(record, "gpt", id);
    if (auto it = record.find("length"); it != record.end() && !it->is_null()) {
      if (!it->is_number_integer() || it->get<std::int64_t>() < 0) {
        throw Error(Errc::MalformedRecord, "length of " + id + " must be a nonnegative integer");
      }
      rec.length = it->get<std::int64_t>();
    }
    if (rec.gpt && (*rec.gpt < 0.0 || *rec.gpt > 100.0)) {
      throw Error(Errc::ScoreOutOfRange, "gpt score of " + id + " outside [0,100]");
    }
    if (!cache.emplace(id, rec).second) throw Error(Errc::DuplicateId, id);
  }
  return cache;
}

ScoreCache read_scores(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_scores(in);
}

void write_scores(const ScoreCache& cache, std::ostream& out) {
  for (const auto& [id, rec] : cache) {
    if (rec.gpt && (*rec.gpt < 0.0 || *rec.gpt > 100.0)) {
      throw Error(Errc::ScoreOutOfRange, "gpt score of " + id + " outside [0,100]");
    }
    json record = {{"id", id}};
    if (rec.clip) record["clip"] = *rec.clip;
    if (rec.length) record["length"] = *rec.length;
    if (rec.reward) record["reward"] = *rec.reward;
    if (rec.gpt) record["gpt"] = *rec.gpt;
    out << record.dump() << '\n';
  }
}

void write_scores(const ScoreCache& cache, const std::filesystem::path& path) {
  auto out = open_output(path);
  write_scores(cache, out);
}

}  // namespace mmselect::corpus
