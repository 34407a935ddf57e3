#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mmselect/cli.hpp"
#include "mmselect/corpus.hpp"
#include "oracles.hpp"

using namespace mmselect;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

void write_file(const fs::path& path, const std::string& text) { std::ofstream(path, std::ios::trunc) << text; }

}  // namespace

TEST_CASE("config precedence: default < file < flag") {
  const auto dir = oracle::scratch_dir("cli-precedence");
  const auto cfg = dir / "run.conf";
  write_file(cfg, "# synthetic corpus size\nn = 120\n\nnoise = 0.25\n");

  auto size_of = [&](std::vector<std::string> args) {
    args.insert(args.begin(), {"-w", (dir / "w").string(), "--force"});
    const auto r = run(args);
    REQUIRE(r.code == 0);
    return std::stoi(r.out.substr(r.out.find(" of ") + 4));
  };
  CHECK(size_of({"synth"}) == 3439);
  CHECK(size_of({"--config", cfg.string(), "synth"}) == 120);
  CHECK(size_of({"--config", cfg.string(), "synth", "--n", "60"}) == 60);
  CHECK(size_of({"synth", "--n", "60", "--config", cfg.string()}) == 60);
  CHECK(size_of({"synth", "--n", "45"}) == 45);
  fs::remove_all(dir);
}

TEST_CASE("environment sits between the config file and flags") {
  const auto dir = oracle::scratch_dir("cli-env");
  REQUIRE(run({"-w", dir.string(), "synth", "--n", "40"}).code == 0);
  write_file(dir / "run.conf", "providers = http\nrating-url = ftp://from-file\n");

  auto attempt = [&](std::vector<std::string> extra) {
    std::vector<std::string> args{"-w", dir.string(), "--config", (dir / "run.conf").string(), "score"};
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
  };

  ::unsetenv("MMSELECT_RATING_URL");
  auto r = attempt({});
  CHECK(r.code == 1);
  CHECK(contains(r.err, "ftp://from-file"));

  ::setenv("MMSELECT_RATING_URL", "ftp://from-env", 1);
  r = attempt({});
  CHECK(r.code == 1);
  CHECK(contains(r.err, "ftp://from-env"));

  r = attempt({"--rating-url", "ftp://from-flag"});
  CHECK(r.code == 1);
  CHECK(contains(r.err, "ftp://from-flag"));
  ::unsetenv("MMSELECT_RATING_URL");
  fs::remove_all(dir);
}

TEST_CASE("usage errors exit with 2") {
  const auto dir = oracle::scratch_dir("cli-usage");
  write_file(dir / "bad.conf", "alpah = 10\n");
  auto r = run({"--config", (dir / "bad.conf").string(), "curate"});
  CHECK(r.code == 2);
  CHECK(contains(r.err, "alpah"));

  write_file(dir / "garbled.conf", "just words\n");
  CHECK(run({"--config", (dir / "garbled.conf").string(), "synth"}).code == 2);
  CHECK(run({"synth", "--bogus"}).code == 2);
  CHECK(run({"synth", "--n", "5"}).code == 2);
  CHECK(run({"curate", "--indicator", "vibes"}).code == 2);
  CHECK(run({}).code == 2);
  CHECK(run({"--help"}).code == 0);
  fs::remove_all(dir);
}

TEST_CASE("missing score in cache-only mode") {
  const auto dir = oracle::scratch_dir("cli-missing");
  REQUIRE(run({"-w", dir.string(), "synth", "--n", "40"}).code == 0);
  std::istringstream lines(oracle::slurp(dir / "scores.jsonl"));
  std::string line, kept;
  int count = 0;
  while (std::getline(lines, line)) {
    if (count++ != 17) kept += line + "\n";
  }
  write_file(dir / "scores.jsonl", kept);
  const auto r = run({"-w", dir.string(), "score"});
  CHECK(r.code == 1);
  CHECK(contains(r.err, "MissingScore"));
  CHECK(contains(r.err, "syn-17"));
  fs::remove_all(dir);
}

TEST_CASE("stages are skipped when their inputs are unchanged") {
  const auto dir = oracle::scratch_dir("cli-stamp");
  CHECK(run({"-w", dir.string(), "synth", "--n", "50"}).code == 0);
  auto r = run({"-w", dir.string(), "synth", "--n", "50"});
  CHECK(r.code == 0);
  CHECK(contains(r.out, "synth: up to date"));
  r = run({"-w", dir.string(), "--force", "synth", "--n", "50"});
  CHECK_FALSE(contains(r.out, "up to date"));
  r = run({"-w", dir.string(), "synth", "--n", "51"});
  CHECK_FALSE(contains(r.out, "up to date"));

  // Touching an output invalidates the stamp.
  write_file(dir / "oracle.tsv", "x 1\n");
  r = run({"-w", dir.string(), "synth", "--n", "51"});
  CHECK_FALSE(contains(r.out, "up to date"));
  CHECK(contains(r.err, "stage=synth"));
  fs::remove_all(dir);
}

TEST_CASE("synth is deterministic per seed") {
  const auto a = oracle::scratch_dir("cli-synth-a");
  const auto b = oracle::scratch_dir("cli-synth-b");
  REQUIRE(run({"-w", a.string(), "synth", "--n", "100", "--seed", "4"}).code == 0);
  REQUIRE(run({"-w", b.string(), "synth", "--n", "100", "--seed", "4"}).code == 0);
  for (const char* f : {"manifest.jsonl", "scores.jsonl", "oracle.tsv", "features/image.txt"}) {
    CHECK(oracle::slurp(a / f) == oracle::slurp(b / f));
  }
  REQUIRE(run({"-w", b.string(), "synth", "--n", "100", "--seed", "5"}).code == 0);
  CHECK(oracle::slurp(a / "oracle.tsv") != oracle::slurp(b / "oracle.tsv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("curate refuses embeddings from a different bundle") {
  const auto dir = oracle::scratch_dir("cli-bundle");
  const std::string w = dir.string();
  REQUIRE(run({"-w", w, "synth", "--n", "300"}).code == 0);
  REQUIRE(run({"-w", w, "score"}).code == 0);
  REQUIRE(run({"-w", w, "embed"}).code == 0);
  REQUIRE(run({"-w", w, "split", "--n-subsets", "10", "--oracle", (dir / "oracle.tsv").string()}).code == 0);
  REQUIRE(run({"-w", w, "train-selector", "--epochs", "3"}).code == 0);
  REQUIRE(run({"-w", w, "curate", "--alpha", "20", "--clusters", "3"}).code == 0);
  CHECK(corpus::load_manifest(dir / "curation" / "selected.manifest").size() == 20);

  REQUIRE(run({"-w", w, "embed", "--no-standardize"}).code == 0);
  const auto r = run({"-w", w, "curate", "--alpha", "20", "--clusters", "3"});
  CHECK(r.code == 1);
  CHECK(contains(r.err, "BadConfig"));
  fs::remove_all(dir);
}
