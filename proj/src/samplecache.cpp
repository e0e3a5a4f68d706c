#include "mia/samplecache.hpp"

#include <unistd.h>

#include <json.hpp>

#include <cmath>
#include <ctime>
#include <fstream>
#include <limits>

#include "mia/errors.hpp"
#include "mia/log.hpp"

namespace mia {
namespace {

using json = nlohmann::json;

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json encode_cost(const CallCost& cost) {
  return {{"requests", cost.requests}, {"retries", cost.retries}, {"sentinels", cost.sentinels}};
}

json encode_batch(const SampleBatch& b) {
  json samples = json::array();
  for (const auto& [word, count] : b.samples) samples.push_back({word, count});
  return {{"raw_replies", b.raw_replies},
          {"batch",
           {{"samples", samples},
            {"n_requested", b.n_requested},
            {"n_obtained", b.n_obtained},
            {"seed", b.seed}}}};
}

SampleBatch decode_batch(const json& entry, const CacheKey& key) {
  const auto& jb = entry.at("batch");
  SampleBatch b;
  b.context_digest = key.context_digest;
  b.backend_id = key.backend_id;
  b.n_requested = jb.at("n_requested").get<std::uint32_t>();
  b.n_obtained = jb.at("n_obtained").get<std::uint32_t>();
  b.seed = jb.at("seed").get<std::uint64_t>();
  std::uint64_t total = 0;
  for (const auto& s : jb.at("samples")) {
    auto word = s.at(0).get<std::string>();
    const auto count = s.at(1).get<std::uint32_t>();
    if (count == 0 || word.empty() || (!b.samples.empty() && !(b.samples.back().first < word))) {
      throw DataError("malformed sample list");
    }
    total += count;
    b.samples.emplace_back(std::move(word), count);
  }
  if (total != b.n_obtained || b.n_obtained > b.n_requested) {
    throw DataError("sample counts disagree with n_obtained");
  }
  b.raw_replies = entry.at("raw_replies").get<std::vector<std::string>>();
  return b;
}

json encode_continuations(const Continuations& c) {
  return {{"raw_replies", c.raw_replies}, {"sequences", c.sequences}};
}

Continuations decode_continuations(const json& entry, const CacheKey&) {
  Continuations c;
  c.sequences = entry.at("sequences").get<std::vector<std::vector<std::string>>>();
  c.raw_replies = entry.at("raw_replies").get<std::vector<std::string>>();
  return c;
}

json encode_logprob(double lp) { return std::isfinite(lp) ? json(lp) : json(nullptr); }

double decode_logprob(const json& v) {
  return v.is_null() ? -std::numeric_limits<double>::infinity() : v.get<double>();
}

json encode_candidates(const CandidateList& list) {
  json cands = json::array();
  for (const auto& c : list.candidates) cands.push_back({c.token, encode_logprob(c.logprob)});
  return {{"raw_replies", list.raw_replies}, {"candidates", cands}};
}

CandidateList decode_candidates(const json& entry, const CacheKey&) {
  CandidateList list;
  for (const auto& c : entry.at("candidates")) {
    list.candidates.push_back({c.at(0).get<std::string>(), decode_logprob(c.at(1))});
  }
  list.raw_replies = entry.at("raw_replies").get<std::vector<std::string>>();
  return list;
}

json encode_units(const std::vector<Word>& words) {
  json units = json::array();
  for (const auto& w : words) units.push_back({w.surface, w.span.begin, w.span.end});
  return {{"raw_replies", json::array()}, {"units", units}};
}

std::vector<Word> decode_units(const json& entry, const CacheKey&) {
  std::vector<Word> words;
  for (const auto& u : entry.at("units")) {
    Word w;
    w.surface = u.at(0).get<std::string>();
    w.span = {u.at(1).get<std::size_t>(), u.at(2).get<std::size_t>()};
    w.folded = fold(w.surface);
    w.is_numeric = is_numeric_word(w.folded);
    words.push_back(std::move(w));
  }
  return words;
}

}  // namespace

CacheKey CacheKey::make(std::string_view backend_id, std::string_view mode,
                        std::string_view context, std::uint64_t n, std::uint64_t seed,
                        double temperature) {
  CacheKey key;
  key.backend_id = std::string(backend_id);
  key.descriptor.reserve(context.size() + 96);
  key.descriptor.append(backend_id).append("|").append(mode).append("|");
  key.descriptor.append(std::to_string(context.size())).append(":").append(context);
  key.descriptor.append("|").append(std::to_string(n));
  key.descriptor.append("|").append(std::to_string(seed));
  key.descriptor.append("|").append(format_double(temperature));
  key.digest = sha256(key.descriptor);
  key.context_digest = sha256(context);
  return key;
}

CostCounters& CostCounters::operator+=(const CostCounters& other) {
  requests += other.requests;
  retries += other.retries;
  sentinel_count += other.sentinel_count;
  cached_hits += other.cached_hits;
  return *this;
}

CostCounters CostLedger::total() const {
  CostCounters sum;
  for (const auto& [id, c] : backends) sum += c;
  return sum;
}

SampleStore::SampleStore(std::filesystem::path root, bool replay_only)
    : root_(std::move(root)), replay_only_(replay_only) {
  std::error_code ec;
  std::filesystem::create_directories(root_, ec);
  if (ec || !std::filesystem::is_directory(root_)) {
    throw DataError("cannot open sample store at " + root_.string());
  }
}

std::filesystem::path SampleStore::entry_path(const CacheKey& key) const {
  const std::string hex = key.hex();
  return root_ / hex.substr(0, 2) / (hex + ".json");
}

void SampleStore::record(const std::string& backend_id, const CostCounters& delta) {
  std::lock_guard lock(ledger_mutex_);
  ledger_.backends[backend_id] += delta;
}

CostLedger SampleStore::ledger_snapshot() const {
  std::lock_guard lock(ledger_mutex_);
  return ledger_;
}

template <typename T, typename Encode, typename Decode>
T SampleStore::get_or_compute(const CacheKey& key, const std::function<T()>& thunk,
                              Encode encode, Decode decode,
                              std::function<CallCost(const T&)> cost_of) {
  std::lock_guard lock(key_mutex(key));
  const auto path = entry_path(key);
  if (std::ifstream in{path, std::ios::binary}) {
    try {
      const json entry = json::parse(in);
      if (entry.at("descriptor").get<std::string>() != key.descriptor) {
        throw DataError("descriptor mismatch");
      }
      T value = decode(entry, key);
      record(key.backend_id, CostCounters{0, 0, 0, 1});
      return value;
    } catch (const std::exception& e) {
      log_warn("ignoring corrupt cache entry " + path.string() + ": " + e.what());
    }
  }
  if (replay_only_) throw CacheMiss(key.descriptor.substr(0, 200));

  T fresh = thunk();
  const CallCost cost = cost_of(fresh);
  json entry = encode(fresh);
  entry["descriptor"] = key.descriptor;
  entry["cost"] = encode_cost(cost);
  entry["created_at"] = utc_now();

  std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(tmp_counter_++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << entry.dump(1) << '\n';
    out.flush();
    if (!out) throw DataError("cannot write cache entry " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw DataError("cannot publish cache entry " + path.string());
  }
  record(key.backend_id, CostCounters{cost.requests, cost.retries, cost.sentinels, 0});

  // Hand back the persisted form so hits and misses are indistinguishable.
  T value = decode(entry, key);
  if constexpr (!std::is_same_v<T, std::vector<Word>>) value.cost = cost;
  return value;
}

SampleBatch SampleStore::get_or_sample(const CacheKey& key,
                                       const std::function<SampleBatch()>& thunk) {
  return get_or_compute<SampleBatch>(key, thunk, encode_batch, decode_batch,
                                     [](const SampleBatch& b) { return b.cost; });
}

Continuations SampleStore::get_or_generate(const CacheKey& key,
                                           const std::function<Continuations()>& thunk) {
  return get_or_compute<Continuations>(key, thunk, encode_continuations, decode_continuations,
                                       [](const Continuations& c) { return c.cost; });
}

CandidateList SampleStore::get_or_rank(const CacheKey& key,
                                       const std::function<CandidateList()>& thunk) {
  return get_or_compute<CandidateList>(key, thunk, encode_candidates, decode_candidates,
                                       [](const CandidateList& c) { return c.cost; });
}

namespace {

struct LogprobValue {
  double logprob = 0.0;
  CallCost cost;
};

}  // namespace

double SampleStore::get_or_logprob(const CacheKey& key, const std::function<double()>& thunk) {
  const std::function<LogprobValue()> wrapped = [&] {
    return LogprobValue{thunk(), CallCost{1, 0, 0}};
  };
  return get_or_compute<LogprobValue>(
             key, wrapped,
             [](const LogprobValue& v) {
               return json{{"raw_replies", json::array()}, {"logprob", encode_logprob(v.logprob)}};
             },
             [](const json& entry, const CacheKey&) {
               return LogprobValue{decode_logprob(entry.at("logprob")), {}};
             },
             [](const LogprobValue& v) { return v.cost; })
      .logprob;
}

std::vector<Word> SampleStore::get_or_tokenize(const CacheKey& key,
                                               const std::function<std::vector<Word>()>& thunk) {
  return get_or_compute<std::vector<Word>>(key, thunk, encode_units, decode_units,
                                           [](const std::vector<Word>&) { return CallCost{1, 0, 0}; });
}

StoreStats SampleStore::scan() const {
  StoreStats stats;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root_)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    ++stats.entries;
    stats.bytes += entry.file_size();
    std::ifstream in(entry.path(), std::ios::binary);
    const json parsed = json::parse(in, nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object() || !parsed.contains("descriptor")) {
      ++stats.corrupt;
    }
  }
  return stats;
}

CachedBackend::CachedBackend(BackendPtr inner, std::shared_ptr<SampleStore> store,
                             Options options)
    : inner_(std::move(inner)), store_(std::move(store)), options_(std::move(options)) {
  if (!store_) throw ConfigError("cached backend requires a sample store");
  if (inner_) {
    id_ = options_.backend_id.empty() ? inner_->id() : options_.backend_id;
    tier_ = inner_->tier();
  } else {
    if (options_.backend_id.empty()) {
      throw ConfigError("replay without a live backend needs an explicit backend id");
    }
    id_ = options_.backend_id;
    tier_ = options_.tier;
  }
}

std::size_t CachedBackend::max_inflight() const {
  return inner_ ? inner_->max_inflight() : 64;
}

Backend& CachedBackend::inner(const CacheKey& key) {
  if (!inner_) throw CacheMiss(key.descriptor.substr(0, 200));
  return *inner_;
}

Distribution CachedBackend::next_word_distribution(std::string_view context) {
  if (!inner_) throw UnsupportedCapability("replay backend has no exact distribution");
  return inner_->next_word_distribution(context);
}

SampleBatch CachedBackend::do_sample_next_words(std::string_view context, std::uint32_t n,
                                                std::uint64_t seed) {
  const auto key = CacheKey::make(id_, "next_words", context, n, seed, options_.temperature);
  return store_->get_or_sample(key, [&] { return inner(key).sample_next_words(context, n, seed); });
}

SampleBatch CachedBackend::do_sample_next_tokens(std::string_view context, std::uint32_t n,
                                                 std::uint64_t seed) {
  const auto key = CacheKey::make(id_, "next_tokens", context, n, seed, options_.temperature);
  return store_->get_or_sample(key,
                               [&] { return inner(key).sample_next_tokens(context, n, seed); });
}

Continuations CachedBackend::do_generate_continuation(std::string_view context,
                                                      std::uint32_t max_words, std::uint32_t n,
                                                      std::uint64_t seed) {
  const auto key = CacheKey::make(id_, "continuation/" + std::to_string(max_words), context, n,
                                  seed, options_.temperature);
  return store_->get_or_generate(
      key, [&] { return inner(key).generate_continuation(context, max_words, n, seed); });
}

std::vector<Word> CachedBackend::do_tokenize_units(std::string_view text) {
  const auto key = CacheKey::make(id_, "tokenize", text, 0, 0, 0.0);
  return store_->get_or_tokenize(key, [&] { return inner(key).tokenize_units(text); });
}

CandidateList CachedBackend::do_top_candidates(std::string_view context, std::uint32_t top_k) {
  const auto key = CacheKey::make(id_, "top_candidates", context, top_k, 0, options_.temperature);
  return store_->get_or_rank(
      key, [&] { return inner(key).top_candidates_with_logprobs(context, top_k); });
}

double CachedBackend::do_unit_logprob(std::string_view context, std::string_view unit) {
  const std::string mode = "logprob/" + std::to_string(unit.size()) + ":" + std::string(unit);
  const auto key = CacheKey::make(id_, mode, context, 1, 0, options_.temperature);
  return store_->get_or_logprob(key, [&] { return inner(key).unit_logprob(context, unit); });
}

}  // namespace mia
