#include "mmselect/curate.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>

#include "mmselect/error.hpp"
#include "mmselect/numerics.hpp"

namespace mmselect::curate {

std::vector<Index> allocate(std::span<const Index> cluster_sizes, Index alpha) {
  if (cluster_sizes.empty()) throw Error(Errc::BadConfig, "no clusters to allocate over");
  Index total = 0;
  for (Index s : cluster_sizes) {
    if (s <= 0) throw Error(Errc::BadConfig, "cluster sizes must be positive");
    total += s;
  }
  if (alpha < 0) throw Error(Errc::BadConfig, "alpha must be nonnegative");
  if (alpha > total) {
    throw Error(Errc::InfeasibleAlpha, "alpha " + std::to_string(alpha) + " exceeds " + std::to_string(total) + " items");
  }

  const std::size_t k = cluster_sizes.size();
  std::vector<Index> quota(k);
  std::vector<Index> remainder(k);
  Index assigned = 0;
  for (std::size_t i = 0; i < k; ++i) {
    // alpha * size <= total^2, far inside 64 bits at any realistic corpus size.
    const Index scaled = alpha * cluster_sizes[i];
    quota[i] = std::min(scaled / total, cluster_sizes[i]);
    remainder[i] = scaled % total;
    assigned += quota[i];
  }

  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });

  Index left = alpha - assigned;
  while (left > 0) {
    bool progressed = false;
    for (std::size_t i : order) {
      if (left == 0) break;
      if (quota[i] >= cluster_sizes[i]) continue;
      ++quota[i];
      --left;
      progressed = true;
    }
    if (!progressed) throw Error(Errc::InfeasibleAlpha, "cannot place remaining quota");
  }
  return quota;
}

std::vector<Index> select_topk_positions(std::span<const double> scores, Index k) {
  const Index n = static_cast<Index>(scores.size());
  if (k < 0) throw Error(Errc::BadConfig, "negative k");
  if (k > n) {
    throw Error(Errc::QuotaExceedsCluster, "quota " + std::to_string(k) + " for " + std::to_string(n) + " items");
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return scores[a] > scores[b]; });
  order.resize(static_cast<std::size_t>(k));
  return order;
}

std::vector<std::string> select_topk(std::span<const ScoredId> scored, Index k) {
  std::vector<double> scores;
  scores.reserve(scored.size());
  for (const auto& s : scored) scores.push_back(s.score);
  std::vector<std::string> out;
  for (Index pos : select_topk_positions(scores, k)) out.push_back(scored[static_cast<std::size_t>(pos)].id);
  return out;
}

void CurationConfig::validate(Index corpus_size) const {
  if (clusters < 1) throw Error(Errc::BadConfig, "cluster count must be >= 1");
  if (alpha < 1) throw Error(Errc::BadConfig, "alpha must be >= 1");
  if (alpha > corpus_size) {
    throw Error(Errc::InfeasibleAlpha, "alpha " + std::to_string(alpha) + " exceeds corpus size " +
                                           std::to_string(corpus_size));
  }
}

SelectionResult curate_scored(const std::vector<std::string>& ids, const Matrix& image_features,
                              std::span<const double> scores, const CurationConfig& config) {
  const Index n = static_cast<Index>(ids.size());
  config.validate(n);
  if (static_cast<Index>(scores.size()) != n || image_features.rows() != n) {
    throw Error(Errc::DimensionMismatch, "ids, scores and image features must align");
  }

  SelectionResult out;
  out.ids = ids;
  out.scores.assign(scores.begin(), scores.end());

  int k = 1;
  if (config.clustering_enabled) {
    const auto spectral = numerics::spectral_cluster(image_features, config.clusters, config.seed);
    out.labels = spectral.assignment.labels;
    k = config.clusters;
  } else {
    out.labels.assign(static_cast<std::size_t>(n), 0);
  }

  std::vector<std::vector<Index>> members(static_cast<std::size_t>(k));
  for (Index i = 0; i < n; ++i) members[out.labels[i]].push_back(i);
  for (int c = 0; c < k; ++c) {
    if (members[c].empty()) throw Error(Errc::EmptyCluster, "cluster " + std::to_string(c) + " is empty");
    out.cluster_sizes.push_back(static_cast<Index>(members[c].size()));
  }
  out.quotas = allocate(out.cluster_sizes, config.alpha);

  std::vector<Index> chosen;
  for (int c = 0; c < k; ++c) {
    std::vector<double> local;
    local.reserve(members[c].size());
    for (Index i : members[c]) local.push_back(scores[i]);
    std::vector<std::string> picked;
    for (Index pos : select_topk_positions(local, out.quotas[c])) {
      const Index item = members[c][static_cast<std::size_t>(pos)];
      picked.push_back(ids[item]);
      chosen.push_back(item);
    }
    out.per_cluster.push_back(std::move(picked));
  }
  std::sort(chosen.begin(), chosen.end());
  for (Index i : chosen) out.selected.push_back(ids[i]);
  return out;
}

SelectionResult curate(const corpus::Manifest& manifest, const corpus::FeatureStore& features,
                       const std::vector<embedding::ItemEmbedding>& embeddings, const selector::SelectorModel& model,
                       const CurationConfig& config) {
  std::unordered_map<std::string, const embedding::ItemEmbedding*> by_id;
  for (const auto& e : embeddings) by_id.emplace(e.id, &e);

  const auto ids = corpus::manifest_ids(manifest);
  Matrix items(static_cast<Index>(ids.size()), model.shape.input_dim);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto it = by_id.find(ids[i]);
    if (it == by_id.end()) throw Error(Errc::MissingFeature, ids[i] + " has no embedding");
    if (it->second->values.size() != model.shape.input_dim) {
      throw Error(Errc::DimensionMismatch, "embedding of " + ids[i] + " has " +
                                               std::to_string(it->second->values.size()) + " slots, selector expects " +
                                               std::to_string(model.shape.input_dim));
    }
    items.row(static_cast<Index>(i)) = it->second->values.transpose();
  }
  const Vector scores = selector::predict_items(model, items);
  const Matrix image = features.at(corpus::kImageMatrix).gather(ids, corpus::kImageMatrix);
  return curate_scored(ids, image, std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())),
                       config);
}

SelectionResult curate_by_indicator(const corpus::Manifest& manifest, const corpus::FeatureStore& features,
                                    const corpus::ScoreCache& cache, indicators::Indicator which,
                                    const CurationConfig& config) {
  const auto all = embedding::collect_scores(manifest, cache);
  std::vector<double> scores;
  scores.reserve(all.size());
  for (const auto& s : all) scores.push_back(indicators::indicator_value(s, which));
  const auto ids = corpus::manifest_ids(manifest);
  const Matrix image = features.at(corpus::kImageMatrix).gather(ids, corpus::kImageMatrix);
  return curate_scored(ids, image, scores, config);
}

Judgment parse_judgment(std::string_view text) {
  if (text == "win") return Judgment::Win;
  if (text == "tie") return Judgment::Tie;
  if (text == "loss") return Judgment::Loss;
  throw Error(Errc::BadConfig, "judgment must be win, tie or loss");
}

std::string_view outcome_name(Outcome outcome) {
  switch (outcome) {
    case Outcome::Win: return "Win";
    case Outcome::Tie: return "Tie";
    case Outcome::Fail: return "Fail";
  }
  return "?";
}

Outcome aggregate_judgments(Judgment first_order, Judgment second_order) {
  auto points = [](Judgment j) { return j == Judgment::Win ? 1 : j == Judgment::Loss ? -1 : 0; };
  const int total = points(first_order) + points(second_order);
  if (total > 0) return Outcome::Win;
  if (total < 0) return Outcome::Fail;
  return Outcome::Tie;
}

}  // namespace mmselect::curate
