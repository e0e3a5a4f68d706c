// Command-line driver: attack, sweep, stability, bench, mock-serve, cache-stats, synth.

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>

#include "mia/benchkit.hpp"
#include "mia/errors.hpp"
#include "mia/log.hpp"
#include "mia/mock_server.hpp"
#include "mia/runner.hpp"
#include "mia/samplecache.hpp"
#include "mia/synth.hpp"

namespace {

using namespace mia;

// Flags shared by attack, sweep and stability. Unset flags leave the config value alone.
struct RunFlags {
  std::string config;
  std::optional<std::string> method, dataset, backend, backend_id, tier, strategy, out;
  std::optional<std::string> oracle_corpus, base_url, model, api_key_env, cache_dir;
  std::optional<std::string> embeddings, oov_policy, unit, delimiter;
  std::optional<std::uint32_t> n_samples;
  std::optional<std::size_t> shots, start_index, pool_size, bucket, concurrency, top_k;
  std::optional<std::size_t> rouge_order;
  std::optional<int> order;
  std::optional<double> prefix_ratio, alpha, lambda, beta, temperature, mink_fraction;
  std::optional<std::uint64_t> seed, shot_seed, pool_seed;
  bool replay_only = false;
  bool exact_mode = false;
  bool numeric_exact = false;
  bool logprob_weighted = false;

  void attach(CLI::App& app) {
    app.add_option("--config", config, "JSON run configuration");
    app.add_option("--method", method, "simmia | simmia_no_relative | simmia_star | samia | "
                                        "simmia_samia_sampling | loss | mink");
    app.add_option("--dataset", dataset, "JSONL file or prepared benchmark directory");
    app.add_option("--backend", backend, "oracle | http | replay");
    app.add_option("--backend-id", backend_id, "Backend identity used in cache keys");
    app.add_option("--tier", tier, "TEXT_ONLY | TOKENS_VISIBLE | LOGPROBS_VISIBLE");
    app.add_option("--N", n_samples, "Samples per position");
    app.add_option("--T", shots, "Non-member shots");
    app.add_option("--prefix-ratio", prefix_ratio, "Context share for continuation methods");
    app.add_option("--start-index", start_index, "First scored word (1-based)");
    app.add_option("--alpha", alpha, "Additive smoothing");
    app.add_option("--seed", seed, "Master seed");
    app.add_option("--shots-strategy", strategy, "fixed | random | tfidf_most | tfidf_moderate | tfidf_least");
    app.add_option("--shots-seed", shot_seed, "Seed for random shot selection");
    app.add_option("--pool-size", pool_size, "Non-members reserved as shot pool");
    app.add_option("--pool-seed", pool_seed, "Seed for the pool draw");
    app.add_option("--bucket", bucket, "Truncate documents to this many whitespace tokens");
    app.add_option("--oracle-corpus", oracle_corpus, "Training corpus for the oracle backend");
    app.add_option("--order", order, "Oracle n-gram order");
    app.add_option("--lambda", lambda, "Oracle cache weight");
    app.add_option("--beta", beta, "Oracle cache pseudocount");
    app.add_option("--temperature", temperature, "Sampling temperature");
    app.add_option("--base-url", base_url, "HTTP backend base URL");
    app.add_option("--model", model, "Model name sent to the HTTP backend");
    app.add_option("--api-key-env", api_key_env, "Environment variable holding the API key");
    app.add_option("--cache-dir", cache_dir, "Sample cache directory");
    app.add_flag("--replay-only", replay_only, "Serve only from the cache; a miss is fatal");
    app.add_option("--embeddings", embeddings, "Word vector file");
    app.add_option("--oov-policy", oov_policy, "exact_match_fallback | fixed_half");
    app.add_flag("--exact-mode", exact_mode, "Use exact next-word distributions (oracle only)");
    app.add_flag("--numeric-exact", numeric_exact, "Numeric targets only match exactly");
    app.add_flag("--logprob-weighted", logprob_weighted, "Weight candidates by log probability");
    app.add_option("--unit", unit, "word | token");
    app.add_option("--top-k", top_k, "Candidates requested in logprob mode");
    app.add_option("--rouge-order", rouge_order, "ROUGE n-gram order");
    app.add_option("--mink-fraction", mink_fraction, "Share of lowest log probabilities for mink");
    app.add_option("--delimiter", delimiter, "Separator between shots and context");
    app.add_option("--concurrency", concurrency, "Worker threads");
    app.add_option("--out", out, "Output directory");
  }

  RunConfig resolve() const {
    RunConfig c = config.empty() ? RunConfig{} : load_run_config(config);
    if (method) c.attack.method = method_from_string(*method);
    if (dataset) c.dataset.path = *dataset;
    if (backend) c.backend.type = *backend;
    if (backend_id) c.backend.id = *backend_id;
    if (tier) c.backend.tier = tier_from_string(*tier);
    if (n_samples) c.attack.n_samples = *n_samples;
    if (shots) c.attack.shots = *shots;
    if (prefix_ratio) c.attack.prefix_ratio = *prefix_ratio;
    if (start_index) c.attack.start_index = *start_index;
    if (alpha) c.attack.alpha = *alpha;
    if (seed) c.attack.master_seed = *seed;
    if (strategy) c.shots.strategy = shot_strategy_from_string(*strategy);
    if (shot_seed) c.shots.seed = *shot_seed;
    if (pool_size) c.dataset.pool_size = *pool_size;
    if (pool_seed) c.dataset.pool_seed = *pool_seed;
    if (bucket) c.dataset.bucket = *bucket;
    if (oracle_corpus) c.backend.oracle.corpus = *oracle_corpus;
    if (order) c.backend.oracle.order = *order;
    if (lambda) c.backend.oracle.lambda = *lambda;
    if (beta) c.backend.oracle.beta = *beta;
    if (temperature) c.backend.temperature = *temperature;
    if (base_url) c.backend.http.base_url = *base_url;
    if (model) c.backend.http.model = *model;
    if (api_key_env) c.backend.http.api_key_env = *api_key_env;
    if (cache_dir) c.cache.dir = *cache_dir;
    if (replay_only) c.cache.replay_only = true;
    if (embeddings) c.embeddings.path = *embeddings;
    if (oov_policy) c.embeddings.oov_policy = oov_policy_from_string(*oov_policy);
    if (exact_mode) c.attack.exact_mode = true;
    if (numeric_exact) c.attack.numeric_exact = true;
    if (logprob_weighted) c.attack.logprob_weighted = true;
    if (unit) c.attack.unit = unit_from_string(*unit);
    if (top_k) c.attack.top_k = *top_k;
    if (rouge_order) c.attack.rouge_order = *rouge_order;
    if (mink_fraction) c.attack.mink_fraction = *mink_fraction;
    if (delimiter) c.attack.delimiter = *delimiter;
    if (concurrency) {
      c.attack.concurrency = *concurrency;
      c.backend.max_inflight = *concurrency;
    }
    if (out) c.output_dir = *out;
    return c;
  }
};

void print_report_summary(const RunOutcome& outcome) {
  std::printf("auc\t%.6f\n", outcome.report.auc);
  for (const auto& [target, tpr] : outcome.report.tpr_at) {
    std::printf("tpr@%g\t%.6f\n", target, tpr);
  }
  std::printf("queries\t%llu\n", static_cast<unsigned long long>(outcome.report.cost.total_queries));
  std::printf("digest\t%s\n", outcome.digest.c_str());
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::vector<std::string>& items, Parse parse) {
  std::vector<T> out;
  for (const auto& s : items) out.push_back(parse(s));
  return out;
}

MockServer* g_server = nullptr;

void handle_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Membership inference audits against text-generation targets"};
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "debug | info | warn | error | off");

  RunFlags attack_flags;
  auto* attack = app.add_subcommand("attack", "Score a benchmark and emit a report");
  attack_flags.attach(*attack);

  RunFlags sweep_flags;
  std::vector<std::string> sweep_ratios, sweep_ns, sweep_ts, sweep_strategies;
  auto* sweep = app.add_subcommand("sweep", "Run a cartesian grid of attacks");
  sweep_flags.attach(*sweep);
  sweep->add_option("--prefix-ratios", sweep_ratios, "Prefix ratio axis")->delimiter(',');
  sweep->add_option("--Ns", sweep_ns, "Sample size axis")->delimiter(',');
  sweep->add_option("--Ts", sweep_ts, "Shot count axis")->delimiter(',');
  sweep->add_option("--strategies", sweep_strategies, "Shot strategy axis")->delimiter(',');

  RunFlags stability_flags;
  std::size_t runs = 5;
  bool random_shots = false;
  auto* stability = app.add_subcommand("stability", "Repeat an attack and report AUC spread");
  stability_flags.attach(*stability);
  stability->add_option("--runs", runs, "Number of repetitions")->capture_default_str();
  stability->add_flag("--random-shots", random_shots, "Re-draw random shots for every run");

  std::string bench_input, bench_out;
  JsonlFields bench_fields;
  std::optional<std::size_t> bench_bucket;
  std::size_t bench_pool = 10;
  std::uint64_t bench_seed = 0;
  auto* bench = app.add_subcommand("bench", "Prepare a benchmark from raw JSONL");
  bench->add_option("--input", bench_input, "Raw JSONL")->required();
  bench->add_option("--out", bench_out, "Output directory")->required();
  bench->add_option("--bucket", bench_bucket, "Length bucket in whitespace tokens");
  bench->add_option("--pool-size", bench_pool, "Non-members reserved as shot pool")->capture_default_str();
  bench->add_option("--pool-seed", bench_seed, "Seed for the pool draw")->capture_default_str();
  bench->add_option("--text-field", bench_fields.text)->capture_default_str();
  bench->add_option("--label-field", bench_fields.label)->capture_default_str();
  bench->add_option("--id-field", bench_fields.id)->capture_default_str();

  std::string serve_corpus, serve_host = "127.0.0.1";
  int serve_order = 3, serve_port = 8089;
  double serve_lambda = 0.0, serve_beta = 1.0;
  auto* serve = app.add_subcommand("mock-serve", "Serve an n-gram oracle over the chat protocol");
  serve->add_option("--corpus", serve_corpus, "Training JSONL")->required();
  serve->add_option("--order", serve_order)->capture_default_str();
  serve->add_option("--lambda", serve_lambda, "Cache weight")->capture_default_str();
  serve->add_option("--beta", serve_beta, "Cache pseudocount")->capture_default_str();
  serve->add_option("--host", serve_host)->capture_default_str();
  serve->add_option("--port", serve_port, "0 picks a free port")->capture_default_str();

  std::string stats_dir;
  auto* stats = app.add_subcommand("cache-stats", "Summarize a sample cache");
  stats->add_option("--cache-dir", stats_dir)->required();

  SynthConfig synth_config;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate the synthetic member/non-member corpus");
  synth->add_option("--out", synth_out, "Output JSONL")->required();
  synth->add_option("--documents", synth_config.documents)->capture_default_str();
  synth->add_option("--vocab", synth_config.vocab_size)->capture_default_str();
  synth->add_option("--successors", synth_config.successors)->capture_default_str();
  synth->add_option("--concentration", synth_config.concentration)->capture_default_str();
  synth->add_option("--noise", synth_config.noise)->capture_default_str();
  synth->add_option("--zipf", synth_config.zipf)->capture_default_str();
  synth->add_option("--min-words", synth_config.min_words)->capture_default_str();
  synth->add_option("--max-words", synth_config.max_words, "Exclusive")->capture_default_str();
  synth->add_option("--seed", synth_config.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorCategory::config);
  }

  try {
    set_log_level(log_level_from_string(log_level));

    if (attack->parsed()) {
      const auto outcome = run_attack(attack_flags.resolve());
      print_report_summary(outcome);
      std::size_t invalid = 0;
      for (const auto& s : outcome.scores) invalid += s.valid ? 0 : 1;
      if (invalid > 0) std::fprintf(stderr, "%zu documents invalid\n", invalid);
    } else if (sweep->parsed()) {
      SweepAxes axes;
      axes.prefix_ratio = parse_list<double>(sweep_ratios, [](const std::string& s) { return std::stod(s); });
      axes.n_samples = parse_list<std::uint32_t>(
          sweep_ns, [](const std::string& s) { return static_cast<std::uint32_t>(std::stoul(s)); });
      axes.shots = parse_list<std::size_t>(sweep_ts, [](const std::string& s) { return std::stoul(s); });
      axes.strategy = parse_list<ShotStrategy>(
          sweep_strategies, [](const std::string& s) { return shot_strategy_from_string(s); });
      const auto points = run_sweep(sweep_flags.resolve(), axes);
      std::size_t failed = 0;
      for (std::size_t k = 0; k < points.size(); ++k) {
        const auto& p = points[k];
        if (p.ok) {
          std::printf("%zu\tratio=%g N=%u T=%zu %s\tauc=%.6f\n", k, p.prefix_ratio, p.n_samples,
                      p.shots, to_string(p.strategy), p.auc);
        } else {
          ++failed;
          std::printf("%zu\tfailed\t%s\n", k, p.error.c_str());
        }
      }
      if (failed == points.size()) return 1;
    } else if (stability->parsed()) {
      const auto outcome = run_stability(stability_flags.resolve(), runs, random_shots);
      for (std::size_t r = 0; r < outcome.aucs.size(); ++r) {
        std::printf("run %zu\tauc=%.6f\n", r, outcome.aucs[r]);
      }
      std::printf("mean\t%.6f\nstddev\t%.6f\n", outcome.mean, outcome.stddev);
    } else if (bench->parsed()) {
      DatasetConfig d;
      d.path = bench_input;
      d.fields = bench_fields;
      d.bucket = bench_bucket;
      d.pool_size = bench_pool;
      d.pool_seed = bench_seed;
      const auto prepared = prepare_benchmark(d);
      write_prepared(prepared, bench_out);
      std::printf("documents\t%zu\npool\t%zu\nskipped_short\t%zu\ndigest\t%s\n",
                  prepared.documents.size(), prepared.prefix_pool.size(), prepared.skipped_short,
                  benchmark_digest(prepared).c_str());
    } else if (serve->parsed()) {
      const auto corpus = load_jsonl(serve_corpus).documents;
      auto oracle = std::make_shared<const NGramOracle>(
          NGramOracle::train(corpus, serve_order, serve_lambda, serve_beta));
      MockServer server(oracle);
      const int port = server.bind(serve_host, serve_port);
      std::printf("listening on http://%s:%d\noracle_digest %s\n", serve_host.c_str(), port,
                  server.oracle_digest().c_str());
      std::fflush(stdout);
      g_server = &server;
      std::signal(SIGINT, handle_signal);
      std::signal(SIGTERM, handle_signal);
      server.run();
      g_server = nullptr;
    } else if (stats->parsed()) {
      SampleStore store(stats_dir, true);
      const auto s = store.scan();
      std::printf("entries\t%llu\nbytes\t%llu\ncorrupt\t%llu\n",
                  static_cast<unsigned long long>(s.entries), static_cast<unsigned long long>(s.bytes),
                  static_cast<unsigned long long>(s.corrupt));
    } else if (synth->parsed()) {
      const auto docs = generate_corpus(synth_config);
      write_corpus_jsonl(docs, synth_out);
      std::printf("documents\t%zu\n", docs.size());
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.category());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
  return 0;
}
