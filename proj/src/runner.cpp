#include "mia/runner.hpp"

#include <json.hpp>

#include <algorithm>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include "mia/digest.hpp"
#include "mia/errors.hpp"
#include "mia/log.hpp"
#include "mia/ngram_oracle.hpp"

namespace mia {
namespace {

using json = nlohmann::json;

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  const std::set<std::string> names(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    if (names.count(key) == 0) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + std::string(key) + "' in " + where);
  }
}

template <typename T>
void read_optional(const json& obj, const char* key, std::optional<T>& out,
                   const std::string& where) {
  if (!obj.contains(key)) return;
  if (obj.at(key).is_null()) {
    out.reset();
    return;
  }
  T value{};
  read(obj, key, value, where);
  out = value;
}

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json nullable(double x) { return std::isfinite(x) ? json(round12(x)) : json(nullptr); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

std::shared_ptr<const EmbeddingTable> load_embeddings(const RunConfig& config,
                                                      const Benchmark& bench) {
  const auto& e = config.embeddings;
  auto table = e.path.empty() ? EmbeddingTable(0, e.oov_policy, "none")
                              : load_vectors(e.path, e.oov_policy);
  table.set_oov_policy(e.oov_policy);
  if (table.duplicates_skipped() > 0) {
    log_warn(std::to_string(table.duplicates_skipped()) + " duplicate words skipped in " + e.path);
  }
  if (!e.remote_url.empty()) {
    RemoteEmbeddingSource::Options o;
    o.base_url = e.remote_url;
    o.path = e.remote_path;
    o.source_id = e.remote_source_id;
    o.cache_dir = e.remote_cache_dir;
    RemoteEmbeddingSource source(o);
    std::set<std::string> words;
    for (const auto* set : {&bench.documents, &bench.prefix_pool}) {
      for (const auto& d : *set) {
        for (const auto& w : d.words) words.insert(w.folded);
      }
    }
    const std::vector<std::string> list(words.begin(), words.end());
    fetch_remote_vectors(list, source, table);
  }
  if (table.size() == 0) {
    log_warn("no embedding vectors loaded; similarity falls back to the OOV policy");
  }
  return std::make_shared<const EmbeddingTable>(std::move(table));
}

}  // namespace

void RunConfig::validate() const {
  attack.validate();
  if (dataset.path.empty()) throw ConfigError("dataset path is required");
  if (backend.type != "oracle" && backend.type != "http" && backend.type != "replay") {
    throw ConfigError("backend type must be oracle, http or replay");
  }
  if (backend.type == "replay" && cache.dir.empty()) {
    throw ConfigError("replay backend needs a cache directory");
  }
  if (cache.replay_only && cache.dir.empty()) {
    throw ConfigError("replay-only mode needs a cache directory");
  }
  if (attack.uses_shots() && attack.shots > dataset.pool_size && !std::filesystem::is_directory(dataset.path)) {
    throw ConfigError("T = " + std::to_string(attack.shots) + " exceeds the prefix pool size " +
                      std::to_string(dataset.pool_size));
  }
  if (histogram_bins == 0 || !(histogram_hi > histogram_lo)) {
    throw ConfigError("histogram needs bins > 0 and hi > lo");
  }
  for (double t : fpr_targets) {
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("FPR targets must lie in [0, 1]");
  }
}

RunConfig run_config_from_json(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  check_keys(root, {"attack", "shots", "dataset", "backend", "cache", "embeddings", "output",
                    "fpr_targets", "histogram"},
             "config");
  if (root.contains("attack")) {
    const auto& a = root["attack"];
    const std::string w = "attack";
    check_keys(a, {"method", "N", "T", "prefix_ratio", "start_index", "alpha", "denom_floor",
                   "master_seed", "delimiter", "numeric_exact", "rouge_order", "mink_fraction",
                   "exact_mode", "unit", "logprob_weighted", "top_k", "concurrency"},
               w);
    std::string method = to_string(c.attack.method);
    read(a, "method", method, w);
    c.attack.method = method_from_string(method);
    read(a, "N", c.attack.n_samples, w);
    read(a, "T", c.attack.shots, w);
    read(a, "prefix_ratio", c.attack.prefix_ratio, w);
    read(a, "start_index", c.attack.start_index, w);
    read(a, "alpha", c.attack.alpha, w);
    read(a, "denom_floor", c.attack.denom_floor, w);
    read(a, "master_seed", c.attack.master_seed, w);
    read(a, "delimiter", c.attack.delimiter, w);
    read(a, "numeric_exact", c.attack.numeric_exact, w);
    read(a, "rouge_order", c.attack.rouge_order, w);
    read(a, "mink_fraction", c.attack.mink_fraction, w);
    read(a, "exact_mode", c.attack.exact_mode, w);
    std::string unit = to_string(c.attack.unit);
    read(a, "unit", unit, w);
    c.attack.unit = unit_from_string(unit);
    read(a, "logprob_weighted", c.attack.logprob_weighted, w);
    read(a, "top_k", c.attack.top_k, w);
    read(a, "concurrency", c.attack.concurrency, w);
  }
  if (root.contains("shots")) {
    const auto& s = root["shots"];
    check_keys(s, {"strategy", "seed"}, "shots");
    std::string strategy = to_string(c.shots.strategy);
    read(s, "strategy", strategy, "shots");
    c.shots.strategy = shot_strategy_from_string(strategy);
    read(s, "seed", c.shots.seed, "shots");
  }
  if (root.contains("dataset")) {
    const auto& d = root["dataset"];
    check_keys(d, {"path", "text_field", "label_field", "id_field", "pool_size", "pool_seed",
                   "bucket"},
               "dataset");
    read(d, "path", c.dataset.path, "dataset");
    read(d, "text_field", c.dataset.fields.text, "dataset");
    read(d, "label_field", c.dataset.fields.label, "dataset");
    read(d, "id_field", c.dataset.fields.id, "dataset");
    read(d, "pool_size", c.dataset.pool_size, "dataset");
    read(d, "pool_seed", c.dataset.pool_seed, "dataset");
    read_optional(d, "bucket", c.dataset.bucket, "dataset");
  }
  if (root.contains("backend")) {
    const auto& b = root["backend"];
    check_keys(b, {"type", "id", "tier", "temperature", "max_inflight", "oracle", "http"},
               "backend");
    read(b, "type", c.backend.type, "backend");
    read(b, "id", c.backend.id, "backend");
    if (b.contains("tier")) {
      std::string tier;
      read(b, "tier", tier, "backend");
      c.backend.tier = tier_from_string(tier);
    }
    read(b, "temperature", c.backend.temperature, "backend");
    read(b, "max_inflight", c.backend.max_inflight, "backend");
    if (b.contains("oracle")) {
      const auto& o = b["oracle"];
      check_keys(o, {"corpus", "order", "lambda", "beta"}, "backend.oracle");
      read(o, "corpus", c.backend.oracle.corpus, "backend.oracle");
      read(o, "order", c.backend.oracle.order, "backend.oracle");
      read(o, "lambda", c.backend.oracle.lambda, "backend.oracle");
      read(o, "beta", c.backend.oracle.beta, "backend.oracle");
    }
    if (b.contains("http")) {
      const auto& h = b["http"];
      const std::string w = "backend.http";
      check_keys(h, {"base_url", "chat_path", "tokenize_path", "model", "max_n_per_request",
                     "max_attempts", "backoff_ms", "backoff_factor", "timeout_ms", "auth_header",
                     "auth_prefix", "api_key_env", "failure_budget", "top_logprobs", "send_seed"},
                 w);
      auto& o = c.backend.http;
      read(h, "base_url", o.base_url, w);
      read(h, "chat_path", o.chat_path, w);
      read(h, "tokenize_path", o.tokenize_path, w);
      read(h, "model", o.model, w);
      read(h, "max_n_per_request", o.max_n_per_request, w);
      read(h, "max_attempts", o.max_attempts, w);
      std::int64_t ms = o.backoff_initial.count();
      read(h, "backoff_ms", ms, w);
      o.backoff_initial = std::chrono::milliseconds{ms};
      read(h, "backoff_factor", o.backoff_factor, w);
      ms = o.timeout.count();
      read(h, "timeout_ms", ms, w);
      o.timeout = std::chrono::milliseconds{ms};
      read(h, "auth_header", o.auth_header, w);
      read(h, "auth_prefix", o.auth_prefix, w);
      read(h, "api_key_env", o.api_key_env, w);
      read(h, "failure_budget", o.failure_budget, w);
      read(h, "top_logprobs", o.top_logprobs, w);
      read(h, "send_seed", o.send_seed, w);
    }
  }
  if (root.contains("cache")) {
    const auto& k = root["cache"];
    check_keys(k, {"dir", "replay_only"}, "cache");
    read(k, "dir", c.cache.dir, "cache");
    read(k, "replay_only", c.cache.replay_only, "cache");
  }
  if (root.contains("embeddings")) {
    const auto& e = root["embeddings"];
    const std::string w = "embeddings";
    check_keys(e, {"path", "oov_policy", "remote_url", "remote_path", "remote_source_id",
                   "remote_cache_dir"},
               w);
    read(e, "path", c.embeddings.path, w);
    std::string policy = to_string(c.embeddings.oov_policy);
    read(e, "oov_policy", policy, w);
    c.embeddings.oov_policy = oov_policy_from_string(policy);
    read(e, "remote_url", c.embeddings.remote_url, w);
    read(e, "remote_path", c.embeddings.remote_path, w);
    read(e, "remote_source_id", c.embeddings.remote_source_id, w);
    read(e, "remote_cache_dir", c.embeddings.remote_cache_dir, w);
  }
  if (root.contains("output")) {
    check_keys(root["output"], {"dir"}, "output");
    read(root["output"], "dir", c.output_dir, "output");
  }
  read(root, "fpr_targets", c.fpr_targets, "config");
  if (root.contains("histogram")) {
    const auto& h = root["histogram"];
    check_keys(h, {"lo", "hi", "bins"}, "histogram");
    read(h, "lo", c.histogram_lo, "histogram");
    read(h, "hi", c.histogram_hi, "histogram");
    read(h, "bins", c.histogram_bins, "histogram");
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return run_config_from_json(buf.str());
}

std::string run_config_to_json(const RunConfig& c) {
  const auto& a = c.attack;
  const auto& h = c.backend.http;
  json root = {
      {"attack",
       {{"method", to_string(a.method)},
        {"N", a.n_samples},
        {"T", a.shots},
        {"prefix_ratio", a.prefix_ratio},
        {"start_index", a.start_index},
        {"alpha", a.alpha},
        {"denom_floor", a.denom_floor},
        {"master_seed", a.master_seed},
        {"delimiter", a.delimiter},
        {"numeric_exact", a.numeric_exact},
        {"rouge_order", a.rouge_order},
        {"mink_fraction", a.mink_fraction},
        {"exact_mode", a.exact_mode},
        {"unit", to_string(a.unit)},
        {"logprob_weighted", a.logprob_weighted},
        {"top_k", a.top_k},
        {"concurrency", a.concurrency}}},
      {"shots", {{"strategy", to_string(c.shots.strategy)}, {"seed", c.shots.seed}}},
      {"dataset",
       {{"path", c.dataset.path},
        {"text_field", c.dataset.fields.text},
        {"label_field", c.dataset.fields.label},
        {"id_field", c.dataset.fields.id},
        {"pool_size", c.dataset.pool_size},
        {"pool_seed", c.dataset.pool_seed},
        {"bucket", c.dataset.bucket ? json(*c.dataset.bucket) : json(nullptr)}}},
      {"backend",
       {{"type", c.backend.type},
        {"id", c.backend.effective_id()},
        {"temperature", c.backend.temperature},
        {"max_inflight", c.backend.max_inflight},
        {"oracle",
         {{"corpus", c.backend.oracle.corpus},
          {"order", c.backend.oracle.order},
          {"lambda", c.backend.oracle.lambda},
          {"beta", c.backend.oracle.beta}}},
        {"http",
         {{"base_url", h.base_url},
          {"chat_path", h.chat_path},
          {"tokenize_path", h.tokenize_path},
          {"model", h.model},
          {"max_n_per_request", h.max_n_per_request},
          {"max_attempts", h.max_attempts},
          {"backoff_ms", h.backoff_initial.count()},
          {"backoff_factor", h.backoff_factor},
          {"timeout_ms", h.timeout.count()},
          {"auth_header", h.auth_header},
          {"auth_prefix", h.auth_prefix},
          {"api_key_env", h.api_key_env},
          {"failure_budget", h.failure_budget},
          {"top_logprobs", h.top_logprobs},
          {"send_seed", h.send_seed}}}}},
      {"cache", {{"dir", c.cache.dir}, {"replay_only", c.cache.replay_only}}},
      {"embeddings",
       {{"path", c.embeddings.path},
        {"oov_policy", to_string(c.embeddings.oov_policy)},
        {"remote_url", c.embeddings.remote_url},
        {"remote_path", c.embeddings.remote_path},
        {"remote_source_id", c.embeddings.remote_source_id},
        {"remote_cache_dir", c.embeddings.remote_cache_dir}}},
      {"output", {{"dir", c.output_dir}}},
      {"fpr_targets", c.fpr_targets},
      {"histogram",
       {{"lo", c.histogram_lo}, {"hi", c.histogram_hi}, {"bins", c.histogram_bins}}}};
  if (c.backend.tier) root["backend"]["tier"] = to_string(*c.backend.tier);
  return root.dump(2);
}

Benchmark prepare_benchmark(const DatasetConfig& config) {
  if (std::filesystem::is_directory(config.path)) return load_prepared(config.path);
  Benchmark bench = load_jsonl(config.path, config.fields);
  if (config.bucket) apply_length_bucket(bench, *config.bucket);
  if (config.pool_size > 0) reserve_prefix_pool(bench, config.pool_size, config.pool_seed);
  return bench;
}

BackendPtr make_backend(const RunConfig& config, const Benchmark* bench) {
  const auto& b = config.backend;
  const bool replay = b.type == "replay" || config.cache.replay_only;
  BackendPtr inner;
  if (!replay && b.type == "oracle") {
    std::vector<Document> corpus;
    if (!b.oracle.corpus.empty()) {
      corpus = load_jsonl(b.oracle.corpus).documents;
    } else {
      if (bench == nullptr) throw ConfigError("oracle backend needs a training corpus");
      for (const auto& d : bench->documents) {
        if (d.label == Label::member) corpus.push_back(d);
      }
    }
    auto oracle = std::make_shared<const NGramOracle>(
        NGramOracle::train(corpus, b.oracle.order, b.oracle.lambda, b.oracle.beta));
    OracleBackend::Options o;
    o.id = b.effective_id();
    if (b.tier) o.tier = *b.tier;
    o.temperature = b.temperature;
    o.max_inflight = b.max_inflight;
    inner = std::make_shared<OracleBackend>(std::move(oracle), o);
  } else if (!replay && b.type == "http") {
    auto o = b.http;
    o.id = b.effective_id();
    if (b.tier) o.tier = *b.tier;
    o.temperature = b.temperature;
    o.max_inflight = b.max_inflight;
    inner = std::make_shared<HttpChatBackend>(o);
  }
  if (config.cache.dir.empty()) return inner;

  auto store = std::make_shared<SampleStore>(config.cache.dir, config.cache.replay_only);
  CachedBackend::Options o;
  o.backend_id = b.effective_id();
  o.temperature = b.temperature;
  o.tier = b.tier ? *b.tier
                  : (b.type == "http" ? CapabilityTier::text_only : CapabilityTier::logprobs_visible);
  return std::make_shared<CachedBackend>(inner, store, o);
}

RunOutcome run_attack(const RunConfig& config_in) {
  RunConfig config = config_in;
  config.shots.count = config.attack.shots;
  config.validate();
  const std::string started = utc_now();

  const Benchmark bench = prepare_benchmark(config.dataset);
  std::shared_ptr<const EmbeddingTable> table;
  if (config.attack.needs_embeddings()) table = load_embeddings(config, bench);
  const BackendPtr backend = make_backend(config, &bench);
  const Attack attack(backend, table, config.attack);

  RunOutcome out;
  out.benchmark_digest = benchmark_digest(bench);
  out.scores = attack.run(bench, config.shots);

  const auto first_valid = std::find_if(out.scores.begin(), out.scores.end(),
                                        [](const MembershipScore& s) { return s.valid; });
  if (first_valid == out.scores.end() && !out.scores.empty()) {
    const auto& first = out.scores.front();
    throw Error(first.error_category, "no document could be scored; first failure (" +
                                          first.doc_id + "): " + first.error);
  }

  std::vector<ScoreRow> rows;
  std::map<Label, std::vector<double>> ratios;
  ReportCost cost;
  for (const auto& s : out.scores) {
    rows.push_back({s.doc_id, s.label, s.score, s.valid});
    cost.total_queries += s.cost.requests + s.cost.retries;
    cost.total_retries += s.cost.retries;
    cost.sentinels += s.cost.sentinels;
    if (!s.valid) continue;
    for (const auto& t : s.trace) {
      if (std::isfinite(t.ratio)) ratios[s.label].push_back(t.ratio);
    }
  }
  out.report = build_report(to_string(config.attack.method), std::move(rows), config.fpr_targets);
  if (!ratios.empty()) {
    out.report.histogram = relative_score_histogram(ratios, config.histogram_lo,
                                                    config.histogram_hi, config.histogram_bins);
  }
  json params = json::parse(config.attack.parameters_json());
  if (config.attack.uses_shots()) {
    params["shot_strategy"] = to_string(config.shots.strategy);
    params["shot_seed"] = config.shots.seed;
  }
  params["benchmark_digest"] = out.benchmark_digest;
  if (table) {
    params["embeddings"] = {{"source", table->source_id()},
                            {"words", table->size()},
                            {"dim", table->dim()},
                            {"oov_policy", to_string(table->oov_policy())}};
  }
  out.report.parameters_json = params.dump();
  if (auto* cached = dynamic_cast<CachedBackend*>(backend.get())) {
    out.ledger = cached->store().ledger_snapshot();
    cost.cached_hits = out.ledger.total().cached_hits;
  }
  out.report.cost = cost;
  out.digest = report_digest(out.report);

  if (!config.output_dir.empty()) {
    const std::filesystem::path dir = config.output_dir;
    emit_report(out.report, dir);
    std::string traces;
    for (const auto& s : out.scores) {
      json trace = json::array();
      for (const auto& t : s.trace) {
        trace.push_back({t.position, nullable(t.s_plain), nullable(t.s_prefixed), nullable(t.ratio)});
      }
      traces += json{{"doc_id", s.doc_id},
                     {"label", to_string(s.label)},
                     {"method", to_string(s.method)},
                     {"score", nullable(s.score)},
                     {"valid", s.valid},
                     {"error", s.error},
                     {"n_queries", s.n_queries},
                     {"retries", s.cost.retries},
                     {"sentinels", s.cost.sentinels},
                     {"wall_time", s.wall_time},
                     {"shot_ids", s.shot_ids},
                     {"trace", trace}}
                    .dump() +
                '\n';
    }
    write_text(dir / "traces.jsonl", traces);
    write_text(dir / "benchmark.json", benchmark_manifest_json(bench) + "\n");
    json ledger = json::object();
    for (const auto& [id, c] : out.ledger.backends) {
      ledger[id] = {{"requests", c.requests},
                    {"retries", c.retries},
                    {"sentinel_count", c.sentinel_count},
                    {"cached_hits", c.cached_hits}};
    }
    const json manifest = {{"tool", "miaudit"},
                           {"version", kToolVersion},
                           {"config", json::parse(run_config_to_json(config))},
                           {"benchmark", {{"file", "benchmark.json"}, {"digest", out.benchmark_digest}}},
                           {"started_at", started},
                           {"finished_at", utc_now()},
                           {"report_digest", out.digest},
                           {"cost_ledger", ledger}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  }
  return out;
}

std::vector<SweepPoint> run_sweep(const RunConfig& base, const SweepAxes& axes) {
  const auto or_base = [](auto axis, auto value) {
    if (axis.empty()) axis.push_back(value);
    return axis;
  };
  const auto ratios = or_base(axes.prefix_ratio, base.attack.prefix_ratio);
  const auto ns = or_base(axes.n_samples, base.attack.n_samples);
  const auto ts = or_base(axes.shots, base.attack.shots);
  const auto strategies = or_base(axes.strategy, base.shots.strategy);

  std::vector<SweepPoint> points;
  for (double ratio : ratios) {
    for (auto n : ns) {
      for (auto t : ts) {
        for (auto strategy : strategies) {
          SweepPoint p;
          p.prefix_ratio = ratio;
          p.n_samples = n;
          p.shots = t;
          p.strategy = strategy;
          RunConfig c = base;
          c.attack.prefix_ratio = ratio;
          c.attack.n_samples = n;
          c.attack.shots = t;
          c.shots.strategy = strategy;
          if (!base.output_dir.empty()) {
            c.output_dir = (std::filesystem::path(base.output_dir) /
                            ("point-" + std::to_string(points.size())))
                               .string();
            std::filesystem::create_directories(c.output_dir);
          }
          try {
            const auto outcome = run_attack(c);
            p.ok = true;
            p.auc = outcome.report.auc;
            p.tpr_at.insert(outcome.report.tpr_at.begin(), outcome.report.tpr_at.end());
            p.digest = outcome.digest;
          } catch (const Error& e) {
            log_warn("sweep point " + std::to_string(points.size()) + " failed: " + e.what());
            p.error = e.what();
          }
          points.push_back(std::move(p));
        }
      }
    }
  }

  if (!base.output_dir.empty()) {
    std::string csv = "point,prefix_ratio,N,T,strategy,status,auc";
    for (double t : base.fpr_targets) csv += ",tpr_at_" + json(t).dump();
    csv += ",digest,error\n";
    for (std::size_t k = 0; k < points.size(); ++k) {
      const auto& p = points[k];
      csv += std::to_string(k) + ',' + json(p.prefix_ratio).dump() + ',' + std::to_string(p.n_samples) +
             ',' + std::to_string(p.shots) + ',' + to_string(p.strategy) + ',' +
             (p.ok ? "ok" : "failed") + ',' + (p.ok ? json(round12(p.auc)).dump() : "");
      for (double t : base.fpr_targets) {
        csv += ',';
        if (p.ok && p.tpr_at.count(t)) csv += json(round12(p.tpr_at.at(t))).dump();
      }
      std::string error = p.error;
      for (auto& ch : error) {
        if (ch == ',' || ch == '\n' || ch == '"') ch = ' ';
      }
      csv += ',' + p.digest + ',' + error + '\n';
    }
    write_text(std::filesystem::path(base.output_dir) / "sweep.csv", csv);
  }
  return points;
}

StabilityOutcome run_stability(const RunConfig& base, std::size_t runs, bool random_shots) {
  if (runs < 2) throw ConfigError("stability needs at least two runs");
  StabilityOutcome out;
  for (std::size_t r = 0; r < runs; ++r) {
    RunConfig c = base;
    c.attack.master_seed = derive_seed(base.attack.master_seed, "stability", r, "attack");
    if (random_shots) {
      c.shots.strategy = ShotStrategy::random;
      c.shots.seed = derive_seed(base.attack.master_seed, "stability", r, "shots");
    }
    if (!base.output_dir.empty()) {
      c.output_dir = (std::filesystem::path(base.output_dir) / ("run-" + std::to_string(r))).string();
      std::filesystem::create_directories(c.output_dir);
    }
    const auto outcome = run_attack(c);
    out.aucs.push_back(outcome.report.auc);
    out.digests.push_back(outcome.digest);
  }
  const double n = static_cast<double>(out.aucs.size());
  for (double a : out.aucs) out.mean += a / n;
  double ss = 0.0;
  for (double a : out.aucs) ss += (a - out.mean) * (a - out.mean);
  out.stddev = std::sqrt(ss / (n - 1.0));
  if (!base.output_dir.empty()) {
    const json summary = {{"runs", runs},
                          {"random_shots", random_shots},
                          {"aucs", out.aucs},
                          {"digests", out.digests},
                          {"mean", round12(out.mean)},
                          {"stddev", round12(out.stddev)}};
    write_text(std::filesystem::path(base.output_dir) / "stability.json", summary.dump(2) + "\n");
  }
  return out;
}

}  // namespace mia
