#include <gtest/gtest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "mia/errors.hpp"
#include "mia/runner.hpp"
#include "mia/synth.hpp"

namespace mia {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path small_corpus(const fs::path& dir) {
  SynthConfig s;
  s.documents = 24;
  s.min_words = 15;
  s.max_words = 20;
  const auto path = dir / "corpus.jsonl";
  write_corpus_jsonl(generate_corpus(s), path);
  return path;
}

TEST(Config, ParsesAndRoundTrips) {
  const auto c = run_config_from_json(R"({
    "attack": {"method": "samia", "N": 12, "prefix_ratio": 0.25, "master_seed": 3},
    "shots": {"strategy": "random", "seed": 4},
    "dataset": {"path": "x.jsonl", "pool_size": 5, "bucket": 32},
    "backend": {"type": "http", "tier": "TOKENS_VISIBLE",
                "http": {"base_url": "http://h", "timeout_ms": 1000}},
    "cache": {"dir": "c"},
    "fpr_targets": [0.1]
  })");
  EXPECT_EQ(c.attack.method, Method::samia);
  EXPECT_EQ(c.attack.n_samples, 12u);
  EXPECT_EQ(c.shots.strategy, ShotStrategy::random);
  EXPECT_EQ(c.dataset.bucket, std::optional<std::size_t>(32));
  EXPECT_EQ(c.backend.tier, CapabilityTier::tokens_visible);
  EXPECT_EQ(c.backend.http.timeout.count(), 1000);
  EXPECT_EQ(c.fpr_targets, std::vector<double>{0.1});
  const auto again = run_config_from_json(run_config_to_json(c));
  EXPECT_EQ(run_config_to_json(again), run_config_to_json(c));
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(run_config_from_json(R"({"atack": {}})"), ConfigError);
  EXPECT_THROW(run_config_from_json(R"({"attack": {"N": "many"}})"), ConfigError);
  EXPECT_THROW(run_config_from_json(R"({"attack": {"method": "guess"}})"), ConfigError);
  EXPECT_THROW(run_config_from_json("not json"), ConfigError);
  RunConfig c;
  EXPECT_THROW(c.validate(), ConfigError);  // no dataset
  c.dataset.path = "x.jsonl";
  c.backend.type = "replay";
  EXPECT_THROW(c.validate(), ConfigError);  // replay without cache
}

TEST(Runner, EmitsArtifactsAndReplaysFromCache) {
  const auto dir = scratch("mia_runner_replay");
  RunConfig c;
  c.attack.method = Method::simmia_star;
  c.attack.n_samples = 10;
  c.attack.shots = 2;
  c.dataset.path = small_corpus(dir).string();
  c.dataset.pool_size = 3;
  c.backend.oracle.lambda = 0.3;
  c.cache.dir = (dir / "cache").string();
  c.output_dir = (dir / "first").string();
  fs::create_directories(c.output_dir);
  const auto first = run_attack(c);
  for (const char* f : {"report.json", "scores.tsv", "roc.csv", "histogram.csv", "report.sha256",
                        "traces.jsonl", "benchmark.json", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(fs::path(c.output_dir) / f)) << f;
  }
  const auto manifest = nlohmann::json::parse(std::ifstream(fs::path(c.output_dir) / "manifest.json"));
  EXPECT_EQ(manifest.at("report_digest"), first.digest);

  // The manifest's config snapshot alone reproduces the run.
  auto replay = run_config_from_json(manifest.at("config").dump());
  replay.cache.replay_only = true;
  replay.output_dir.clear();
  const auto second = run_attack(replay);
  EXPECT_EQ(second.digest, first.digest);
  EXPECT_EQ(second.ledger.total().requests, 0u);
  EXPECT_GT(second.ledger.total().cached_hits, 0u);

  replay.cache.dir = (dir / "cold").string();
  EXPECT_THROW(run_attack(replay), CacheMiss);
  fs::remove_all(dir);
}

TEST(Runner, SweepRecordsEveryPoint) {
  const auto dir = scratch("mia_runner_sweep");
  RunConfig c;
  c.attack.method = Method::simmia_star;
  c.attack.n_samples = 5;
  c.attack.shots = 2;
  c.dataset.path = small_corpus(dir).string();
  c.dataset.pool_size = 3;
  c.output_dir = (dir / "sweep").string();
  SweepAxes axes;
  axes.shots = {1, 2, 4};  // 4 exceeds the pool and fails
  const auto points = run_sweep(c, axes);
  ASSERT_EQ(points.size(), 3u);
  EXPECT_TRUE(points[0].ok);
  EXPECT_TRUE(points[1].ok);
  EXPECT_FALSE(points[2].ok);
  std::ifstream csv(fs::path(c.output_dir) / "sweep.csv");
  std::string line;
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 4);
  fs::remove_all(dir);
}

TEST(Runner, StabilityUsesDistinctSeeds) {
  const auto dir = scratch("mia_runner_stability");
  RunConfig c;
  c.attack.method = Method::simmia_star;
  c.attack.n_samples = 5;
  c.attack.shots = 2;
  c.dataset.path = small_corpus(dir).string();
  c.dataset.pool_size = 3;
  const auto out = run_stability(c, 3, false);
  ASSERT_EQ(out.aucs.size(), 3u);
  EXPECT_NE(out.digests[0], out.digests[1]);
  EXPECT_GE(out.stddev, 0.0);
  EXPECT_THROW(run_stability(c, 1, false), ConfigError);
  fs::remove_all(dir);
}

TEST(Runner, UnreachableBackendFailsWithItsCategory) {
  const auto dir = scratch("mia_runner_unreachable");
  RunConfig c;
  c.attack.method = Method::simmia_star;
  c.attack.n_samples = 3;
  c.attack.shots = 2;
  c.dataset.path = small_corpus(dir).string();
  c.dataset.pool_size = 3;
  c.backend.type = "http";
  c.backend.http.base_url = "http://127.0.0.1:1";
  c.backend.http.max_attempts = 1;
  c.backend.http.timeout = std::chrono::milliseconds{200};
  try {
    run_attack(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::budget) << e.what();
  }
  fs::remove_all(dir);
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(MIAUDIT_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("mia_cli_codes");
  const auto corpus = small_corpus(dir).string();
  EXPECT_EQ(run_cli("attack --dataset " + corpus + " --method simmia_star --N 3 --T 2 --pool-size 3"), 0);
  EXPECT_EQ(run_cli("attack --dataset " + corpus + " --method bogus"), 2);
  EXPECT_EQ(run_cli("attack --dataset " + corpus + " --N notanumber"), 2);
  EXPECT_EQ(run_cli("attack --dataset " + (dir / "missing.jsonl").string()), 3);
  EXPECT_EQ(run_cli("attack --dataset " + corpus + " --method loss --tier TEXT_ONLY --pool-size 3"), 4);
  EXPECT_EQ(run_cli("attack --dataset " + corpus + " --method simmia_star --N 3 --T 2 --pool-size 3 "
                    "--cache-dir " + (dir / "cold").string() + " --replay-only"),
            5);
  EXPECT_EQ(run_cli("bench --input " + corpus + " --out " + (dir / "prepared").string() + " --bucket 12 --pool-size 3"), 0);
  EXPECT_TRUE(fs::exists(dir / "prepared" / "manifest.json"));
  fs::remove_all(dir);
}

}  // namespace
}  // namespace mia
