#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mia/attack.hpp"
#include "mia/benchkit.hpp"
#include "mia/embeddings.hpp"
#include "mia/http_backend.hpp"
#include "mia/metrics.hpp"
#include "mia/samplecache.hpp"

namespace mia {

inline constexpr std::string_view kToolVersion = "0.1.0";

struct DatasetConfig {
  std::string path;  // JSONL file, or a directory written by `bench`
  JsonlFields fields;
  std::size_t pool_size = 10;
  std::uint64_t pool_seed = 0;
  std::optional<std::size_t> bucket;
};

struct OracleConfig {
  std::string corpus;  // empty: train on the dataset's members
  int order = 3;
  double lambda = 0.0;
  double beta = 1.0;
};

struct BackendConfig {
  std::string type = "oracle";  // oracle | http | replay
  std::string id;               // defaults to the type name
  std::optional<CapabilityTier> tier;
  double temperature = 1.0;
  std::size_t max_inflight = 8;
  OracleConfig oracle;
  HttpChatBackend::Options http;

  std::string effective_id() const { return id.empty() ? type : id; }
};

struct CacheConfig {
  std::string dir;
  bool replay_only = false;
};

struct EmbeddingConfig {
  std::string path;  // empty: no vectors, the OOV policy decides every pair
  OovPolicy oov_policy = OovPolicy::exact_match_fallback;
  std::string remote_url;
  std::string remote_path = "/embed";
  std::string remote_source_id;
  std::string remote_cache_dir;
};

struct RunConfig {
  AttackConfig attack;
  ShotSelection shots;
  DatasetConfig dataset;
  BackendConfig backend;
  CacheConfig cache;
  EmbeddingConfig embeddings;
  std::string output_dir;
  std::vector<double> fpr_targets{0.05, 0.01};
  double histogram_lo = 0.0;
  double histogram_hi = 2.0;
  std::size_t histogram_bins = 40;

  void validate() const;
};

/// Parses the JSON config document; unknown keys are rejected.
RunConfig run_config_from_json(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& config);

/// Evaluation set and pool as the run will see them.
Benchmark prepare_benchmark(const DatasetConfig& config);

struct RunOutcome {
  EvalReport report;
  std::string digest;
  std::vector<MembershipScore> scores;
  CostLedger ledger;  // store counters when a cache is configured
  std::string benchmark_digest;
};

/// Runs one attack end to end. With a non-empty output_dir writes report
/// files, traces.jsonl, benchmark.json and manifest.json there.
RunOutcome run_attack(const RunConfig& config);

/// Grid of hyperparameters for a sweep; an empty axis keeps the base value.
struct SweepAxes {
  std::vector<double> prefix_ratio;
  std::vector<std::uint32_t> n_samples;
  std::vector<std::size_t> shots;
  std::vector<ShotStrategy> strategy;
};

struct SweepPoint {
  double prefix_ratio = 0.0;
  std::uint32_t n_samples = 0;
  std::size_t shots = 0;
  ShotStrategy strategy = ShotStrategy::fixed;
  bool ok = false;
  std::string error;
  double auc = 0.0;
  std::map<double, double> tpr_at;
  std::string digest;
};

/// Runs every grid point, each into `<output_dir>/point-<k>` when an output
/// directory is set. A failing point is recorded and the sweep continues;
/// sweep.csv gets one row per attempted point.
std::vector<SweepPoint> run_sweep(const RunConfig& base, const SweepAxes& axes);

struct StabilityOutcome {
  std::vector<double> aucs;
  std::vector<std::string> digests;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1)
};

/// Repeats the attack `runs` times with per-run master seeds derived from the
/// base seed. With `random_shots` every run also re-draws its shots.
StabilityOutcome run_stability(const RunConfig& base, std::size_t runs, bool random_shots);

/// Backend described by `config`, wrapped in the sample cache when one is configured.
BackendPtr make_backend(const RunConfig& config, const Benchmark* bench);

}  // namespace mia
