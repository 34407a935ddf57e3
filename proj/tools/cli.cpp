#include "mmselect/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "mmselect/corpus.hpp"
#include "mmselect/curate.hpp"
#include "mmselect/embedding.hpp"
#include "mmselect/error.hpp"
#include "mmselect/http_providers.hpp"
#include "mmselect/indicators.hpp"
#include "mmselect/quality_labels.hpp"
#include "mmselect/selector.hpp"
#include "mmselect/synth.hpp"

namespace mmselect::cli {

namespace fs = std::filesystem;

namespace {

// ---- fingerprints ----------------------------------------------------------

class Fingerprint {
 public:
  Fingerprint& bytes(std::string_view data) {
    for (unsigned char c : data) {
      hash_ ^= c;
      hash_ *= 1099511628211ULL;
    }
    return *this;
  }

  Fingerprint& field(std::string_view key, std::string_view value) {
    bytes(key);
    bytes("=");
    bytes(value);
    return bytes("\n");
  }

  Fingerprint& path(const fs::path& p) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& entry : fs::recursive_directory_iterator(p)) {
        if (entry.is_regular_file() && entry.path().filename().string().front() != '.') files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        bytes(fs::relative(f, p).generic_string());
        contents(f);
      }
    } else if (fs::is_regular_file(p)) {
      contents(p);
    } else {
      bytes("<missing>");
    }
    return bytes("\n");
  }

  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash_));
    return buf;
  }

 private:
  void contents(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) bytes(std::string_view(buf, static_cast<std::size_t>(in.gcount())));
  }

  std::uint64_t hash_ = 14695981039346656037ULL;
};

std::string hash_of(const fs::path& p) { return Fingerprint().path(p).hex(); }

// A stage is skipped when its input fingerprint is unchanged and every
// output still hashes to what the last run produced.
struct Stamp {
  fs::path file;
  std::string inputs;
  std::vector<fs::path> outputs;

  bool fresh() const {
    std::ifstream in(file);
    if (!in) return false;
    std::string tag, value;
    if (!(in >> tag >> value) || tag != "inputs" || value != inputs) return false;
    std::size_t seen = 0;
    std::string digest;
    while (in >> tag >> digest && std::getline(in >> std::ws, value)) {
      if (tag != "output" || seen >= outputs.size() || value != outputs[seen].generic_string()) return false;
      if (hash_of(outputs[seen]) != digest || !fs::exists(outputs[seen])) return false;
      ++seen;
    }
    return seen == outputs.size();
  }

  void seal() const {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::trunc);
    out << "inputs " << inputs << '\n';
    for (const auto& o : outputs) out << "output " << hash_of(o) << ' ' << o.generic_string() << '\n';
  }
};

// ---- logging ---------------------------------------------------------------

class Log {
 public:
  explicit Log(std::ostream& err) : err_(err) {}

  void event(std::string_view stage, std::string_view event,
             std::initializer_list<std::pair<std::string_view, std::string>> fields = {}) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char ts[32];
    std::strftime(ts, sizeof(ts), "%Y-%m-%dT%H:%M:%SZ", &tm);
    err_ << "ts=" << ts << " stage=" << stage << " event=" << event;
    for (const auto& [k, v] : fields) {
      err_ << ' ' << k << '=';
      if (v.find_first_of(" \"=") != std::string::npos) {
        err_ << std::quoted(v);
      } else {
        err_ << v;
      }
    }
    err_ << '\n';
  }

 private:
  std::ostream& err_;
};

class Timer {
 public:
  std::string elapsed_ms() const {
    const auto d = std::chrono::steady_clock::now() - start_;
    return std::to_string(std::chrono::duration_cast<std::chrono::milliseconds>(d).count());
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// ---- config file -----------------------------------------------------------

struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<ConfigEntry> read_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("--config", "cannot open " + path.string());
  std::vector<ConfigEntry> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string text = trim(line.substr(0, line.find('#')));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw CLI::ValidationError("--config", path.string() + ":" + std::to_string(number) + ": expected key = value");
    }
    out.push_back({trim(std::string_view(text).substr(0, eq)), trim(std::string_view(text).substr(eq + 1)), number});
  }
  return out;
}

// ---- stage settings --------------------------------------------------------

struct Paths {
  fs::path work = ".";
  std::string manifest, features, scores, bundle, embeddings, subsets, labels, selector, curation, oracle;

  fs::path resolve(const std::string& given, const char* fallback) const {
    return given.empty() ? work / fallback : fs::path(given);
  }
  fs::path manifest_path() const { return resolve(manifest, "manifest.jsonl"); }
  fs::path features_dir() const { return resolve(features, "features"); }
  fs::path scores_path() const { return resolve(scores, "scores.jsonl"); }
  fs::path bundle_dir() const { return resolve(bundle, "bundle"); }
  fs::path embeddings_path() const { return resolve(embeddings, "embeddings.txt"); }
  fs::path subsets_dir() const { return resolve(subsets, "subsets"); }
  fs::path labels_path() const { return labels.empty() ? subsets_dir() / "labels.jsonl" : fs::path(labels); }
  fs::path selector_dir() const { return resolve(selector, "selector"); }
  fs::path curation_dir() const { return resolve(curation, "curation"); }
};

struct Settings {
  Paths paths;
  bool force = false;

  // synth
  Index n = 3439;
  double noise = 0.5;

  // score
  std::string providers = "cache";
  int workers = 1;
  int retries = 3;
  std::string rating_url, reward_url;
  int timeout = 60;

  // embed
  Index feature_size = embedding::kDefaultFeatureSize;
  bool no_standardize = false;
  bool separate_reduction = false;
  bool reuse_bundle = false;

  // split
  int n_subsets = 30;
  std::string space = "indicator";
  std::string split_oracle;

  // train-selector
  std::string kind = "attention";
  int layers = 2;
  Index d_model = 16;
  int epochs = 20;
  double lr = 0.01;
  std::string optimizer = "adam";

  // curate
  Index alpha = 200;
  int clusters = 10;
  bool no_clustering = false;
  std::string indicator;

  // report
  int baselines = 20;

  std::uint64_t seed = 0;
};

std::string sidecar_fingerprint(const fs::path& embeddings) {
  std::ifstream in(fs::path(embeddings.string() + ".bundle"));
  std::string value;
  in >> value;
  return value;
}

// ---- stages ----------------------------------------------------------------

class Stages {
 public:
  Stages(const Settings& s, std::ostream& out, Log& log) : s_(s), out_(out), log_(log) {}

  void synth() {
    const auto& p = s_.paths;
    Fingerprint fp;
    fp.field("stage", "synth").field("n", std::to_string(s_.n)).field("seed", std::to_string(s_.seed));
    fp.field("noise", num(s_.noise));
    const Stamp stamp{p.work / ".synth.stamp", fp.hex(),
                      {p.work / "manifest.jsonl", p.work / "features", p.work / "scores.jsonl", p.work / "oracle.tsv"}};
    if (skip("synth", stamp)) return;
    Timer t;
    synth::SynthConfig config;
    config.n = s_.n;
    config.seed = s_.seed;
    config.noise = s_.noise;
    const auto corpus = synth::synthesize(config);
    synth::write_synth(corpus, p.work);
    stamp.seal();
    log_.event("synth", "done", {{"items", std::to_string(corpus.manifest.size())}, {"elapsed_ms", t.elapsed_ms()}});
    out_ << "wrote synthetic corpus of " << corpus.manifest.size() << " items to " << p.work.string() << '\n';
  }

  void score() {
    const auto& p = s_.paths;
    const fs::path cache_path = p.scores_path();
    Fingerprint fp;
    fp.field("stage", "score").path(p.manifest_path()).path(p.features_dir());
    fp.field("providers", s_.providers).field("rating_url", s_.rating_url).field("reward_url", s_.reward_url);
    const Stamp stamp{stamp_for(cache_path), fp.hex(), {cache_path}};
    if (skip("score", stamp)) return;
    Timer t;
    const auto manifest = corpus::load_manifest(p.manifest_path());
    const auto features = corpus::load_features(p.features_dir(), manifest);
    corpus::ScoreCache cache;
    if (fs::exists(cache_path)) cache = corpus::read_scores(cache_path);

    indicators::Providers providers;
    providers.retries = s_.retries;
    providers.workers = s_.workers;
    std::unique_ptr<indicators::HttpRatingClient> rating;
    std::unique_ptr<indicators::HttpRewardClient> reward;
    if (s_.providers == "http") {
      if (s_.rating_url.empty() && s_.reward_url.empty()) {
        throw Error(Errc::BadConfig, "http providers need MMSELECT_RATING_URL or MMSELECT_REWARD_URL");
      }
      indicators::HttpOptions options;
      if (const char* key = std::getenv("MMSELECT_API_KEY")) options.api_key = key;
      options.timeout_seconds = s_.timeout;
      if (!s_.rating_url.empty()) {
        rating = std::make_unique<indicators::HttpRatingClient>(indicators::Endpoint::parse(s_.rating_url), options);
        providers.rating = rating.get();
      }
      if (!s_.reward_url.empty()) {
        reward = std::make_unique<indicators::HttpRewardClient>(indicators::Endpoint::parse(s_.reward_url), options);
        providers.reward = reward.get();
      }
    }

    const std::size_t before = cache.size();
    try {
      indicators::score_corpus_into(manifest, features, providers, cache);
    } catch (...) {
      corpus::write_scores(cache, cache_path);  // keep the partial progress
      throw;
    }
    corpus::write_scores(cache, cache_path);
    stamp.seal();
    log_.event("score", "done",
               {{"items", std::to_string(manifest.size())},
                {"cached_rows", std::to_string(before)},
                {"providers", s_.providers},
                {"elapsed_ms", t.elapsed_ms()}});
    out_ << "scored " << manifest.size() << " items into " << cache_path.string() << '\n';
  }

  void embed() {
    const auto& p = s_.paths;
    const fs::path output = p.embeddings_path();
    Fingerprint fp;
    fp.field("stage", "embed").path(p.manifest_path()).path(p.features_dir()).path(p.scores_path());
    fp.field("feature_size", std::to_string(s_.feature_size))
        .field("standardize", s_.no_standardize ? "no" : "yes")
        .field("layout", s_.separate_reduction ? "separate" : "joint")
        .field("reuse_bundle", s_.reuse_bundle ? "yes" : "no");
    if (s_.reuse_bundle) fp.path(p.bundle_dir());
    const std::string inputs = fp.hex();
    std::vector<fs::path> outputs{output, fs::path(output.string() + ".bundle")};
    if (!s_.reuse_bundle) outputs.push_back(p.bundle_dir());
    const Stamp stamp{stamp_for(output), inputs, outputs};
    if (skip("embed", stamp)) return;

    Timer t;
    const auto manifest = corpus::load_manifest(p.manifest_path());
    const auto features = corpus::load_features(p.features_dir(), manifest);
    const auto cache = corpus::read_scores(p.scores_path());

    embedding::EmbeddingBundle bundle;
    if (s_.reuse_bundle) {
      bundle = embedding::load_bundle(p.bundle_dir());
      log_.event("embed", "bundle_reused", {{"dir", p.bundle_dir().string()}, {"fingerprint", bundle.fingerprint}});
    } else {
      const auto scores = embedding::collect_scores(manifest, cache);
      bundle.standardized = !s_.no_standardize;
      bundle.standardizer =
          bundle.standardized ? embedding::fit_standardizer(scores) : embedding::Standardizer::identity();
      bundle.reducer = embedding::fit_feature_reducer(
          features, manifest, s_.feature_size,
          s_.separate_reduction ? embedding::ReducerLayout::Separate : embedding::ReducerLayout::Joint);
      bundle.fingerprint = inputs;
      embedding::save_bundle(bundle, p.bundle_dir());
    }
    const auto items =
        embedding::assemble_corpus(manifest, cache, features, bundle.standardizer, bundle.reducer);
    corpus::write_matrix(embedding::to_matrix(items), output);
    {
      std::ofstream side(fs::path(output.string() + ".bundle"), std::ios::trunc);
      side << bundle.fingerprint << '\n';
    }
    stamp.seal();
    log_.event("embed", "done",
               {{"items", std::to_string(items.size())},
                {"dim", std::to_string(embedding::kScoreSlots + bundle.reducer.output_dim())},
                {"elapsed_ms", t.elapsed_ms()}});
    out_ << "wrote " << items.size() << " embeddings to " << output.string() << '\n';
  }

  void split() {
    const auto& p = s_.paths;
    const fs::path dir = p.subsets_dir();
    Fingerprint fp;
    fp.field("stage", "split").path(p.manifest_path());
    fp.path(s_.space == "image" ? p.features_dir() / "image.txt" : p.embeddings_path());
    fp.field("n_subsets", std::to_string(s_.n_subsets)).field("space", s_.space).field("seed", std::to_string(s_.seed));
    if (!s_.split_oracle.empty()) fp.path(s_.split_oracle);
    std::vector<fs::path> outputs{dir / "subsets.jsonl"};
    if (!s_.split_oracle.empty()) outputs.push_back(dir / "labels.jsonl");
    const Stamp stamp{dir / ".split.stamp", fp.hex(), outputs};
    if (skip("split", stamp)) return;

    Timer t;
    const auto manifest = corpus::load_manifest(p.manifest_path());
    const auto ids = corpus::manifest_ids(manifest);
    const auto source = s_.space == "image" ? corpus::read_matrix(p.features_dir() / "image.txt")
                                            : corpus::read_matrix(p.embeddings_path());
    const Matrix points = source.gather(ids, s_.space == "image" ? corpus::kImageMatrix : "embeddings");
    const auto subsets = labels::build_subsets(points, ids, s_.n_subsets, s_.seed);
    labels::write_subsets(subsets, dir / "subsets.jsonl");
    labels::write_subset_manifests(subsets, manifest, dir);

    if (!s_.split_oracle.empty()) {
      // Planted labels for synthetic runs: each subset's mean oracle quality.
      const auto oracle = curate::read_oracle(s_.split_oracle);
      std::vector<labels::EvalReport> reports;
      for (const auto& subset : subsets) {
        double sum = 0.0;
        for (const auto& id : subset.member_ids) {
          auto it = oracle.find(id);
          if (it == oracle.end()) throw Error(Errc::MissingLabel, id + " has no oracle quality");
          sum += it->second;
        }
        reports.push_back({subset.subset_id, {{"planted", sum / static_cast<double>(subset.member_ids.size())}}});
      }
      labels::write_eval_reports(reports, dir / "labels.jsonl");
    }
    stamp.seal();
    log_.event("split", "done",
               {{"subsets", std::to_string(subsets.size())},
                {"size", std::to_string(subsets.empty() ? 0 : subsets.front().member_ids.size())},
                {"space", s_.space},
                {"elapsed_ms", t.elapsed_ms()}});
    out_ << "wrote " << subsets.size() << " subsets to " << dir.string() << '\n';
  }

  void train_selector() {
    const auto& p = s_.paths;
    const fs::path dir = p.selector_dir();
    Fingerprint fp;
    fp.field("stage", "train-selector").path(p.subsets_dir() / "subsets.jsonl").path(p.labels_path());
    fp.path(p.embeddings_path());
    fp.field("kind", s_.kind).field("layers", std::to_string(s_.layers)).field("d_model", std::to_string(s_.d_model));
    fp.field("epochs", std::to_string(s_.epochs)).field("lr", num(s_.lr)).field("optimizer", s_.optimizer);
    fp.field("seed", std::to_string(s_.seed));
    const Stamp stamp{dir / ".train.stamp", fp.hex(), {dir / "selector.txt", dir / "params.txt"}};
    if (skip("train-selector", stamp)) return;

    Timer t;
    const auto embeddings = corpus::read_matrix(p.embeddings_path());
    auto subsets = labels::read_subsets(p.subsets_dir() / "subsets.jsonl");
    labels::attach_embeddings(subsets, embeddings);
    const auto reports = labels::read_eval_reports(p.labels_path());
    subsets = labels::attach_labels(std::move(subsets), reports);

    std::vector<selector::Sample> samples;
    for (const auto& subset : subsets) samples.push_back({subset.embeddings, *subset.label});

    selector::SelectorShape shape;
    shape.kind = selector::parse_kind(s_.kind);
    shape.input_dim = embeddings.dim();
    shape.d_model = s_.d_model;
    shape.layers = s_.layers;
    selector::TrainConfig config;
    config.epochs = s_.epochs;
    config.learning_rate = s_.lr;
    config.seed = s_.seed;
    config.optimizer = s_.optimizer == "sgd" ? selector::Optimizer::GradientDescent : selector::Optimizer::Adam;
    const auto result = selector::train(selector::init_selector(shape, s_.seed), samples, config);
    selector::save_selector(result.model, dir, sidecar_fingerprint(p.embeddings_path()));
    {
      std::ofstream losses(dir / "losses.tsv", std::ios::trunc);
      losses << "epoch\tloss\n";
      for (std::size_t e = 0; e < result.losses.size(); ++e) losses << e << '\t' << num(result.losses[e]) << '\n';
      losses << result.losses.size() << '\t' << num(result.final_loss) << '\n';
    }
    stamp.seal();
    log_.event("train-selector", "done",
               {{"kind", s_.kind},
                {"samples", std::to_string(samples.size())},
                {"params", std::to_string(result.model.parameter_count())},
                {"initial_loss", num(result.losses.empty() ? result.final_loss : result.losses.front())},
                {"final_loss", num(result.final_loss)},
                {"elapsed_ms", t.elapsed_ms()}});
    out_ << "trained " << s_.kind << " selector, final loss " << num(result.final_loss) << '\n';
  }

  void curate() {
    const auto& p = s_.paths;
    const fs::path dir = p.curation_dir();
    Fingerprint fp;
    fp.field("stage", "curate").path(p.manifest_path()).path(p.features_dir() / "image.txt");
    if (s_.indicator.empty()) {
      fp.path(p.embeddings_path()).path(p.selector_dir());
    } else {
      fp.path(p.scores_path()).field("indicator", s_.indicator);
    }
    fp.field("alpha", std::to_string(s_.alpha)).field("clusters", std::to_string(s_.clusters));
    fp.field("clustering", s_.no_clustering ? "off" : "on").field("seed", std::to_string(s_.seed));
    const Stamp stamp{dir / ".curate.stamp", fp.hex(), {dir / "result.jsonl", dir / "selected.manifest"}};
    if (skip("curate", stamp)) return;

    Timer t;
    const auto manifest = corpus::load_manifest(p.manifest_path());
    corpus::FeatureStore features;
    features.add(std::string(corpus::kImageMatrix), corpus::read_matrix(p.features_dir() / "image.txt"));

    curate::CurationConfig config;
    config.alpha = s_.alpha;
    config.clusters = s_.clusters;
    config.seed = s_.seed;
    config.clustering_enabled = !s_.no_clustering;

    curate::SelectionResult result;
    if (!s_.indicator.empty()) {
      const auto cache = corpus::read_scores(p.scores_path());
      result = curate::curate_by_indicator(manifest, features, cache, indicators::parse_indicator(s_.indicator), config);
    } else {
      std::string trained_on;
      const auto model = selector::load_selector(p.selector_dir(), &trained_on);
      const std::string current = sidecar_fingerprint(p.embeddings_path());
      if (!trained_on.empty() && !current.empty() && trained_on != current) {
        throw Error(Errc::BadConfig, "selector was trained on embeddings from bundle " + trained_on +
                                         ", but " + p.embeddings_path().string() + " comes from bundle " + current);
      }
      const auto items = embedding::from_matrix(corpus::read_matrix(p.embeddings_path()));
      result = curate::curate(manifest, features, items, model, config);
    }
    curate::write_result(result, dir / "result.jsonl");
    curate::write_report(result, manifest, dir, {});
    stamp.seal();
    log_.event("curate", "done",
               {{"selected", std::to_string(result.selected.size())},
                {"clusters", std::to_string(result.cluster_sizes.size())},
                {"scorer", s_.indicator.empty() ? std::string("selector") : s_.indicator},
                {"elapsed_ms", t.elapsed_ms()}});
    out_ << "selected " << result.selected.size() << " of " << manifest.size() << " items into "
         << (dir / "selected.manifest").string() << '\n';
  }

  void report() {
    const auto& p = s_.paths;
    const fs::path dir = p.curation_dir();
    Timer t;
    const auto manifest = corpus::load_manifest(p.manifest_path());
    const auto result = curate::read_result(dir / "result.jsonl");
    curate::ReportOptions options;
    options.baselines = s_.baselines;
    options.seed = s_.seed;
    if (!p.oracle.empty()) options.oracle = curate::read_oracle(p.oracle);
    const auto cmp = curate::write_report(result, manifest, dir, options);

    out_ << "selected\t" << result.selected.size() << '\n';
    out_ << "clusters\t" << result.cluster_sizes.size() << '\n';
    for (std::size_t c = 0; c < result.cluster_sizes.size(); ++c) {
      out_ << "cluster_" << c << "\tsize=" << result.cluster_sizes[c] << "\tquota=" << result.quotas[c] << '\n';
    }
    if (cmp) {
      out_ << "selected_mean\t" << num(cmp->selected_mean) << '\n';
      out_ << "random_mean\t" << num(cmp->random_mean) << '\n';
      out_ << "uplift\t" << num(cmp->uplift) << '\n';
      out_ << "pooled_standard_error\t" << num(cmp->pooled_standard_error) << '\n';
      out_ << "uplift_in_standard_errors\t" << num(cmp->uplift_in_standard_errors) << '\n';
    }
    log_.event("report", "done",
               {{"dir", dir.string()}, {"oracle", cmp ? "yes" : "no"}, {"elapsed_ms", t.elapsed_ms()}});
  }

 private:
  static fs::path stamp_for(const fs::path& output) {
    return output.parent_path() / ("." + output.filename().string() + ".stamp");
  }

  bool skip(std::string_view stage, const Stamp& stamp) {
    if (s_.force || !stamp.fresh()) return false;
    log_.event(stage, "up_to_date", {{"fingerprint", stamp.inputs}});
    out_ << stage << ": up to date\n";
    return true;
  }

  const Settings& s_;
  std::ostream& out_;
  Log& log_;
};

// ---- parser ----------------------------------------------------------------

struct Parser {
  CLI::App app{"Multimodal instruction-data selector", "mmselect"};
  Settings s;
  std::string config_path;
  std::map<std::string, std::function<void(Stages&)>> actions;

  Parser() {
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--config", config_path, "Flat key = value file; command-line flags take precedence");
    app.add_option("-w,--work-dir", s.paths.work, "Directory holding the default stage inputs and outputs");
    app.add_flag("--force", s.force, "Rerun the stage even when its fingerprint is unchanged");

    auto* synth = add("synth", "Generate a planted-quality synthetic corpus", &Stages::synth);
    synth->add_option("--n", s.n, "Number of triplets")->check(CLI::Range(Index{30}, Index{10'000'000}));
    synth->add_option("--noise", s.noise, "Indicator noise standard deviation")->check(CLI::NonNegativeNumber);
    seed(synth);

    auto* score = add("score", "Compute the four quality indicators", &Stages::score);
    manifest(score);
    features(score);
    scores(score);
    score->add_option("--providers", s.providers, "Where reward and GPT scores come from")
        ->check(CLI::IsMember({"cache", "http"}));
    score->add_option("--workers", s.workers, "Concurrent scoring requests")->check(CLI::Range(1, 256));
    score->add_option("--retries", s.retries, "Extra attempts per failed request")->check(CLI::Range(0, 100));
    score->add_option("--rating-url", s.rating_url, "GPT rating endpoint")->envname("MMSELECT_RATING_URL");
    score->add_option("--reward-url", s.reward_url, "Reward model endpoint")->envname("MMSELECT_REWARD_URL");
    score->add_option("--timeout", s.timeout, "Per-request timeout in seconds")->check(CLI::Range(1, 3600));

    auto* embed = add("embed", "Assemble [clip, length, reward, gpt, PCA features] embeddings", &Stages::embed);
    manifest(embed);
    features(embed);
    scores(embed);
    bundle(embed);
    embeddings(embed);
    embed->add_option("--feature-size", s.feature_size, "PCA output width m")->check(CLI::Range(Index{1}, Index{4096}));
    embed->add_flag("--no-standardize", s.no_standardize, "Keep raw indicator scales");
    embed->add_flag("--separate-reduction", s.separate_reduction, "Reduce image and text features separately");
    embed->add_flag("--reuse-bundle", s.reuse_bundle, "Apply a previously fitted standardizer and PCA");

    auto* split = add("split", "Partition the corpus into equal-size subsets", &Stages::split);
    manifest(split);
    features(split);
    embeddings(split);
    subsets(split);
    split->add_option("--n-subsets", s.n_subsets, "Number of subsets")->check(CLI::Range(1, 100000));
    split->add_option("--space", s.space, "Clustering space")->check(CLI::IsMember({"indicator", "image"}));
    split->add_option("--oracle", s.split_oracle, "Write planted labels from an 'id quality' oracle file");
    seed(split);

    auto* train = add("train-selector", "Fit the data selector to subset quality labels", &Stages::train_selector);
    embeddings(train);
    subsets(train);
    train->add_option("--labels", s.paths.labels, "Evaluation reports (default: <subsets>/labels.jsonl)");
    selector(train);
    train->add_option("--kind", s.kind, "Selector architecture")->check(CLI::IsMember({"attention", "mlp", "linear"}));
    train->add_option("--layers", s.layers, "Attention blocks")->check(CLI::Range(1, 64));
    train->add_option("--d-model", s.d_model, "Attention width")->check(CLI::Range(Index{1}, Index{4096}));
    train->add_option("--epochs", s.epochs, "Training epochs")->check(CLI::Range(1, 1000000));
    train->add_option("--lr", s.lr, "Learning rate")->check(CLI::PositiveNumber);
    train->add_option("--optimizer", s.optimizer, "Update rule")->check(CLI::IsMember({"adam", "sgd"}));
    seed(train);

    auto* cur = add("curate", "Cluster-stratified top-k selection", &Stages::curate);
    manifest(cur);
    features(cur);
    scores(cur);
    embeddings(cur);
    selector(cur);
    curation(cur);
    cur->add_option("--alpha", s.alpha, "Number of items to select")->check(CLI::Range(Index{1}, Index{1'000'000'000}));
    cur->add_option("--clusters", s.clusters, "Spectral clusters K")->check(CLI::Range(1, 100000));
    cur->add_flag("--no-clustering", s.no_clustering, "Global top-k instead of per-cluster quotas");
    cur->add_option("--indicator", s.indicator, "Rank by one raw indicator instead of the selector")
        ->check(CLI::IsMember({"clip", "length", "reward", "gpt"}));
    seed(cur);

    auto* rep = add("report", "Summarize a curation run", &Stages::report);
    manifest(rep);
    curation(rep);
    rep->add_option("--oracle", s.paths.oracle, "Planted 'id quality' file for the random-baseline comparison");
    rep->add_option("--baselines", s.baselines, "Random baselines")->check(CLI::Range(1, 100000));
    seed(rep);
  }

  CLI::App* add(const char* name, const char* help, void (Stages::*stage)()) {
    auto* sub = app.add_subcommand(name, help);
    actions[name] = [stage](Stages& st) { (st.*stage)(); };
    return sub;
  }

  void seed(CLI::App* sub) { sub->add_option("--seed", s.seed, "Random seed"); }
  void manifest(CLI::App* sub) { sub->add_option("--manifest", s.paths.manifest, "Manifest JSONL"); }
  void features(CLI::App* sub) { sub->add_option("--features", s.paths.features, "Feature matrix directory"); }
  void scores(CLI::App* sub) { sub->add_option("--score-cache", s.paths.scores, "Score cache JSONL"); }
  void bundle(CLI::App* sub) { sub->add_option("--bundle", s.paths.bundle, "Standardizer/PCA bundle directory"); }
  void embeddings(CLI::App* sub) { sub->add_option("--embeddings", s.paths.embeddings, "Embedding matrix"); }
  void subsets(CLI::App* sub) { sub->add_option("--subsets", s.paths.subsets, "Subset directory"); }
  void selector(CLI::App* sub) { sub->add_option("--selector", s.paths.selector, "Selector model directory"); }
  void curation(CLI::App* sub) { sub->add_option("--output", s.paths.curation, "Curation output directory"); }

  // File values fill every option the command line and environment left unset.
  void apply_config() {
    if (config_path.empty()) return;
    const auto entries = read_config(config_path);
    CLI::App* active = app.get_subcommands().front();
    for (const auto& e : entries) {
      const std::string flag = "--" + e.key;
      bool known = app.get_option_no_throw(flag) != nullptr;
      for (const auto* sub : app.get_subcommands({})) known = known || sub->get_option_no_throw(flag) != nullptr;
      if (!known || e.key == "config") {
        throw CLI::ValidationError("--config", "unknown key '" + e.key + "' on line " + std::to_string(e.line));
      }
      for (CLI::App* scope : {&app, active}) {
        CLI::Option* opt = scope->get_option_no_throw(flag);
        if (opt == nullptr || opt->count() > 0) continue;
        opt->add_result(e.value);
        opt->run_callback();
      }
    }
  }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Parser parser;
  std::vector<std::string> storage;
  storage.reserve(args.size() + 1);
  storage.emplace_back("mmselect");
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : storage) argv.push_back(a.data());

  try {
    parser.app.parse(static_cast<int>(argv.size()), argv.data());
    parser.apply_config();
  } catch (const CLI::ParseError& e) {
    const int code = parser.app.exit(e, out, err);
    if (code != 0) err << parser.app.help();
    return code == 0 ? 0 : 2;
  }

  Log log(err);
  Stages stages(parser.s, out, log);
  const std::string command = parser.app.get_subcommands().front()->get_name();
  try {
    parser.actions.at(command)(stages);
  } catch (const Error& e) {
    log.event(command, "failed", {{"error", std::string(errc_name(e.code()))}});
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    log.event(command, "failed", {{"error", "IoError"}});
    err << "error: IoError: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace mmselect::cli
