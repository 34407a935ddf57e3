#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "mmselect/curate.hpp"
#include "mmselect/error.hpp"

namespace mmselect::curate {

namespace {

using json = nlohmann::json;

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  return out;
}

std::pair<double, double> mean_and_variance(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, ss / static_cast<double>(v.size() - 1)};
}

std::vector<double> lookup(const std::vector<std::string>& ids, const std::map<std::string, double, std::less<>>& quality) {
  std::vector<double> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = quality.find(id);
    if (it == quality.end()) throw Error(Errc::MissingScore, id + " has no oracle quality");
    out.push_back(it->second);
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

// Two overlaid histograms: every item in the cluster, and the selected ones.
std::string histogram_svg(const std::vector<double>& all, const std::vector<double>& picked, double lo, double hi,
                          int bins, const std::string& title) {
  constexpr int width = 480;
  constexpr int height = 240;
  constexpr int margin = 30;
  std::vector<int> total(static_cast<std::size_t>(bins), 0);
  std::vector<int> chosen(static_cast<std::size_t>(bins), 0);
  const double span = hi > lo ? hi - lo : 1.0;
  auto bin_of = [&](double v) { return std::clamp(static_cast<int>((v - lo) / span * bins), 0, bins - 1); };
  for (double v : all) ++total[bin_of(v)];
  for (double v : picked) ++chosen[bin_of(v)];
  const int peak = std::max(1, *std::max_element(total.begin(), total.end()));

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  svg << "<text x=\"" << margin << "\" y=\"18\" font-size=\"12\">" << title << "</text>\n";
  const double bar = static_cast<double>(width - 2 * margin) / bins;
  const double scale = static_cast<double>(height - 2 * margin) / peak;
  for (int b = 0; b < bins; ++b) {
    const double x = margin + b * bar;
    const double h_all = total[b] * scale;
    const double h_sel = chosen[b] * scale;
    svg << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(height - margin - h_all) << "\" width=\"" << fmt(bar - 1)
        << "\" height=\"" << fmt(h_all) << "\" fill=\"#bbbbbb\"/>\n";
    if (chosen[b] > 0) {
      svg << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(height - margin - h_sel) << "\" width=\"" << fmt(bar - 1)
          << "\" height=\"" << fmt(h_sel) << "\" fill=\"#3366cc\"/>\n";
    }
  }
  svg << "<text x=\"" << margin << "\" y=\"" << height - 8 << "\" font-size=\"10\">" << fmt(lo) << "</text>\n";
  svg << "<text x=\"" << width - margin - 30 << "\" y=\"" << height - 8 << "\" font-size=\"10\">" << fmt(hi)
      << "</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace

QualityComparison compare_with_random(const std::vector<std::string>& selected, const std::vector<std::string>& all_ids,
                                      const std::map<std::string, double, std::less<>>& quality, int count,
                                      std::uint64_t seed) {
  if (count < 1) throw Error(Errc::BadConfig, "need at least one random baseline");
  if (selected.size() > all_ids.size()) throw Error(Errc::BadConfig, "selection larger than corpus");
  QualityComparison out;
  const auto picked = lookup(selected, quality);
  std::tie(out.selected_mean, out.selected_variance) = mean_and_variance(picked);

  std::vector<double> pooled;
  std::vector<std::size_t> order(all_ids.size());
  for (int j = 0; j < count; ++j) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(j));
    std::shuffle(order.begin(), order.end(), rng);
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(selected.size()));
    std::vector<std::string> draw;
    for (std::size_t i = 0; i < selected.size(); ++i) draw.push_back(all_ids[order[i]]);
    const auto q = lookup(draw, quality);
    pooled.insert(pooled.end(), q.begin(), q.end());
    out.baselines.push_back(std::move(draw));
  }
  std::tie(out.random_mean, out.random_variance) = mean_and_variance(pooled);

  // Two-sample standard error for one selected and one random subset of equal size.
  const double size = static_cast<double>(std::max<std::size_t>(selected.size(), 1));
  out.pooled_standard_error = std::sqrt((out.selected_variance + out.random_variance) / size);
  out.uplift = out.selected_mean - out.random_mean;
  out.uplift_in_standard_errors = out.pooled_standard_error > 0.0 ? out.uplift / out.pooled_standard_error : 0.0;
  return out;
}

std::map<std::string, double, std::less<>> read_oracle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::map<std::string, double, std::less<>> out;
  std::string id;
  double q = 0.0;
  while (in >> id >> q) out[id] = q;
  if (!in.eof()) throw Error(Errc::MalformedRecord, path.string() + ": expected 'id quality' rows");
  return out;
}

void write_result(const SelectionResult& result, const std::filesystem::path& path) {
  auto out = open_output(path);
  const std::size_t k = result.cluster_sizes.size();
  for (std::size_t c = 0; c < k; ++c) {
    json record = {{"type", "cluster"},
                   {"cluster", c},
                   {"size", result.cluster_sizes[c]},
                   {"quota", result.quotas[c]},
                   {"selected", result.per_cluster[c]}};
    out << record.dump() << '\n';
  }
  std::vector<bool> chosen(result.ids.size(), false);
  {
    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < result.ids.size(); ++i) pos.emplace(result.ids[i], i);
    for (const auto& id : result.selected) chosen[pos.at(id)] = true;
  }
  for (std::size_t i = 0; i < result.ids.size(); ++i) {
    json record = {{"type", "item"},
                   {"id", result.ids[i]},
                   {"cluster", result.labels[i]},
                   {"score", result.scores[i]},
                   {"selected", static_cast<bool>(chosen[i])}};
    out << record.dump() << '\n';
  }
}

SelectionResult read_result(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  SelectionResult out;
  std::string line;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json record = json::parse(line);
      const auto type = record.at("type").get<std::string>();
      if (type == "cluster") {
        out.cluster_sizes.push_back(record.at("size").get<Index>());
        out.quotas.push_back(record.at("quota").get<Index>());
        out.per_cluster.push_back(record.at("selected").get<std::vector<std::string>>());
      } else if (type == "item") {
        out.ids.push_back(record.at("id").get<std::string>());
        out.labels.push_back(record.at("cluster").get<int>());
        out.scores.push_back(record.at("score").get<double>());
        if (record.at("selected").get<bool>()) out.selected.push_back(out.ids.back());
      }
    }
  } catch (const json::exception& e) {
    throw Error(Errc::MalformedRecord, path.string() + ": " + e.what());
  }
  return out;
}

std::optional<QualityComparison> write_report(const SelectionResult& result, const corpus::Manifest& manifest,
                                              const std::filesystem::path& dir, const ReportOptions& options) {
  std::filesystem::create_directories(dir);

  {
    std::unordered_map<std::string, const corpus::Triplet*> by_id;
    for (const auto& t : manifest) by_id.emplace(t.id, &t);
    corpus::Manifest selected;
    for (const auto& id : result.selected) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw Error(Errc::MissingFeature, id + " not in manifest");
      selected.push_back(*it->second);
    }
    corpus::write_manifest(selected, dir / "selected.manifest");
  }

  {
    auto out = open_output(dir / "quotas.tsv");
    out << "cluster\tsize\tquota\tproportional_share\n";
    Index total = 0;
    for (Index s : result.cluster_sizes) total += s;
    const Index alpha = static_cast<Index>(result.selected.size());
    for (std::size_t c = 0; c < result.cluster_sizes.size(); ++c) {
      const double share = static_cast<double>(alpha) * static_cast<double>(result.cluster_sizes[c]) /
                           static_cast<double>(total);
      out << c << '\t' << result.cluster_sizes[c] << '\t' << result.quotas[c] << '\t' << fmt(share) << '\n';
    }
  }

  if (!result.scores.empty()) {
    const auto [lo_it, hi_it] = std::minmax_element(result.scores.begin(), result.scores.end());
    std::unordered_map<std::string, double> score_of;
    for (std::size_t i = 0; i < result.ids.size(); ++i) score_of.emplace(result.ids[i], result.scores[i]);
    for (std::size_t c = 0; c < result.cluster_sizes.size(); ++c) {
      std::vector<double> all;
      for (std::size_t i = 0; i < result.ids.size(); ++i) {
        if (result.labels[i] == static_cast<int>(c)) all.push_back(result.scores[i]);
      }
      std::vector<double> picked;
      for (const auto& id : result.per_cluster[c]) picked.push_back(score_of.at(id));
      auto out = open_output(dir / ("cluster_" + std::to_string(c) + ".svg"));
      out << histogram_svg(all, picked, *lo_it, *hi_it, options.histogram_bins,
                           "cluster " + std::to_string(c) + ": " + std::to_string(picked.size()) + " of " +
                               std::to_string(all.size()) + " selected");
    }
  }

  if (!options.oracle) return std::nullopt;
  auto cmp = compare_with_random(result.selected, result.ids, *options.oracle, options.baselines, options.seed);
  for (std::size_t j = 0; j < cmp.baselines.size(); ++j) {
    auto out = open_output(dir / ("baseline_" + std::to_string(j) + ".ids"));
    for (const auto& id : cmp.baselines[j]) out << id << '\n';
  }
  json summary = {{"selected_mean", cmp.selected_mean},
                  {"selected_variance", cmp.selected_variance},
                  {"random_mean", cmp.random_mean},
                  {"random_variance", cmp.random_variance},
                  {"pooled_standard_error", cmp.pooled_standard_error},
                  {"uplift", cmp.uplift},
                  {"uplift_in_standard_errors", cmp.uplift_in_standard_errors},
                  {"baselines", cmp.baselines.size()},
                  {"selected_size", result.selected.size()}};
  auto out = open_output(dir / "comparison.json");
  out << summary.dump(1) << '\n';
  return cmp;
}

}  // namespace mmselect::curate
