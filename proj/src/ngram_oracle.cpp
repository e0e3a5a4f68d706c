#include "mia/ngram_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "mia/digest.hpp"
#include "mia/errors.hpp"
#include "mia/rng.hpp"

namespace mia {

void NGramOracle::State::push(WordId id) {
  if (!history_.empty()) {
    std::rotate(history_.begin(), history_.begin() + 1, history_.end());
    history_.back() = id;
  }
  if (!cache_.empty()) ++cache_[id];
  ++length_;
}

NGramOracle NGramOracle::train(std::span<const Document> corpus, int order, double cache_weight,
                               double cache_pseudocount) {
  if (order < 1) throw ConfigError("n-gram order must be at least 1");
  if (corpus.empty()) throw DataError("oracle training corpus is empty");
  if (!(cache_weight >= 0.0 && cache_weight <= 1.0)) {
    throw ConfigError("cache weight must lie in [0, 1]");
  }
  if (!(cache_pseudocount > 0.0)) throw ConfigError("cache pseudocount must be positive");

  NGramOracle model;
  model.order_ = order;
  model.cache_weight_ = cache_weight;
  model.cache_pseudocount_ = cache_pseudocount;

  std::set<std::string> words{std::string(kUnknownWord)};
  for (const auto& doc : corpus) {
    for (const auto& w : doc.words) words.insert(w.folded);
  }
  model.vocab_.assign(words.begin(), words.end());
  for (WordId i = 0; i < model.vocab_.size(); ++i) model.index_.emplace(model.vocab_[i], i);
  model.unknown_id_ = model.index_.at(std::string(kUnknownWord));

  std::map<std::string, std::map<WordId, std::uint32_t>> raw;
  const auto context = static_cast<std::size_t>(order - 1);
  for (const auto& doc : corpus) {
    std::vector<WordId> ids(context, kBoundary);
    for (const auto& w : doc.words) ids.push_back(model.index_.at(w.folded));
    for (std::size_t i = context; i < ids.size(); ++i) {
      const std::span<const WordId> history(ids.data() + i - context, context);
      ++raw[history_key(history)][ids[i]];
    }
  }
  for (auto& [key, next] : raw) {
    HistoryCounts entry;
    entry.next.assign(next.begin(), next.end());
    for (const auto& [id, c] : entry.next) entry.total += c;
    model.counts_.emplace(key, std::move(entry));
  }
  return model;
}

std::string NGramOracle::history_key(std::span<const WordId> history) {
  return std::string(reinterpret_cast<const char*>(history.data()),
                     history.size() * sizeof(WordId));
}

const NGramOracle::HistoryCounts* NGramOracle::find(std::span<const WordId> history) const {
  auto it = counts_.find(history_key(history));
  return it == counts_.end() ? nullptr : &it->second;
}

NGramOracle::WordId NGramOracle::id_of(std::string_view folded) const {
  auto it = index_.find(std::string(folded));
  return it == index_.end() ? unknown_id_ : it->second;
}

std::uint32_t NGramOracle::count(std::span<const WordId> history, WordId word) const {
  const auto* entry = find(history);
  if (entry == nullptr) return 0;
  auto it = std::lower_bound(entry->next.begin(), entry->next.end(), word,
                             [](const auto& e, WordId w) { return e.first < w; });
  return (it != entry->next.end() && it->first == word) ? it->second : 0;
}

std::uint32_t NGramOracle::history_total(std::span<const WordId> history) const {
  const auto* entry = find(history);
  return entry == nullptr ? 0 : entry->total;
}

NGramOracle::State NGramOracle::start_state() const {
  State state;
  state.history_.assign(static_cast<std::size_t>(order_ - 1), kBoundary);
  if (cache_weight_ > 0.0) state.cache_.assign(vocab_.size(), 0);
  return state;
}

NGramOracle::State NGramOracle::encode(std::string_view context) const {
  State state = start_state();
  for (const auto& w : tokenize_words(context)) state.push(id_of(w.folded));
  return state;
}

NGramOracle::State NGramOracle::encode_words(std::span<const std::string> folded_words) const {
  State state = start_state();
  for (const auto& w : folded_words) state.push(id_of(w));
  return state;
}

std::vector<double> NGramOracle::probabilities(const State& state) const {
  const auto v = static_cast<double>(vocab_.size());
  std::vector<double> p(vocab_.size());
  const auto* entry = find(state.history_);
  const double denom = (entry == nullptr ? 0.0 : entry->total) + v;
  std::fill(p.begin(), p.end(), 1.0 / denom);
  if (entry != nullptr) {
    for (const auto& [id, c] : entry->next) p[id] = (c + 1.0) / denom;
  }
  if (cache_weight_ > 0.0) {
    const double cache_denom = static_cast<double>(state.length_) + cache_pseudocount_ * v;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double cache = (state.cache_[i] + cache_pseudocount_) / cache_denom;
      p[i] = (1.0 - cache_weight_) * p[i] + cache_weight_ * cache;
    }
  }
  return p;
}

Distribution NGramOracle::distribution(std::string_view context) const {
  const auto p = probabilities(encode(context));
  Distribution out;
  out.reserve(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out.emplace_back(vocab_[i], p[i]);
  return out;
}

std::string NGramOracle::digest() const {
  std::string canon = "ngram-oracle/v1|order=" + std::to_string(order_);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "|lambda=%.17g|beta=%.17g|", cache_weight_, cache_pseudocount_);
  canon += buf;
  for (const auto& w : vocab_) {
    canon += std::to_string(w.size());
    canon += ':';
    canon += w;
  }
  std::vector<const std::pair<const std::string, HistoryCounts>*> entries;
  entries.reserve(counts_.size());
  for (const auto& e : counts_) entries.push_back(&e);
  std::sort(entries.begin(), entries.end(), [](auto* a, auto* b) { return a->first < b->first; });
  for (const auto* e : entries) {
    canon += '|';
    for (unsigned char ch : e->first) {
      canon += "0123456789abcdef"[ch >> 4];
      canon += "0123456789abcdef"[ch & 0xF];
    }
    for (const auto& [id, c] : e->second.next) {
      canon += ',' + std::to_string(id) + '=' + std::to_string(c);
    }
  }
  return sha256_hex(canon);
}

std::uint64_t continuation_seed(std::uint64_t seed, std::uint32_t index) {
  return leading_u64(sha256(std::to_string(seed) + "|continuation|" + std::to_string(index)));
}

OracleBackend::OracleBackend(std::shared_ptr<const NGramOracle> oracle, Options options)
    : oracle_(std::move(oracle)), options_(std::move(options)) {
  if (!oracle_) throw ConfigError("oracle backend requires a trained oracle");
  if (!(options_.temperature > 0.0)) throw ConfigError("temperature must be positive");
}

std::vector<double> OracleBackend::tempered(const NGramOracle::State& state) const {
  auto p = oracle_->probabilities(state);
  if (options_.temperature != 1.0) {
    double total = 0.0;
    for (auto& x : p) {
      x = std::pow(x, 1.0 / options_.temperature);
      total += x;
    }
    for (auto& x : p) x /= total;
  }
  return p;
}

std::vector<std::string> OracleBackend::sample_words(const NGramOracle::State& state,
                                                     std::uint32_t n, std::uint64_t seed) const {
  const auto p = tempered(state);
  std::vector<double> cdf(p.size());
  std::partial_sum(p.begin(), p.end(), cdf.begin());
  Engine rng(seed);
  std::vector<std::string> words;
  words.reserve(n);
  const auto& vocab = oracle_->vocabulary();
  for (std::uint32_t j = 0; j < n; ++j) words.push_back(vocab[sample_cdf(cdf, uniform01(rng))]);
  return words;
}

std::vector<std::string> OracleBackend::continuation(const NGramOracle::State& start,
                                                     std::uint32_t max_words, std::uint64_t seed,
                                                     std::uint32_t index) const {
  Engine rng(continuation_seed(seed, index));
  NGramOracle::State state = start;
  std::vector<std::string> out;
  out.reserve(max_words);
  std::vector<double> cdf;
  for (std::uint32_t k = 0; k < max_words; ++k) {
    const auto p = tempered(state);
    cdf.resize(p.size());
    std::partial_sum(p.begin(), p.end(), cdf.begin());
    const auto id = static_cast<NGramOracle::WordId>(sample_cdf(cdf, uniform01(rng)));
    out.push_back(oracle_->vocabulary()[id]);
    state.push(id);
  }
  return out;
}

std::vector<Candidate> OracleBackend::ranked_candidates(const NGramOracle::State& state,
                                                        std::uint32_t top_k) const {
  const auto p = tempered(state);
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] > p[b]; });
  order.resize(std::min<std::size_t>(top_k, order.size()));
  std::vector<Candidate> out;
  for (auto i : order) out.push_back({oracle_->vocabulary()[i], std::log(p[i])});
  return out;
}

SampleBatch OracleBackend::do_sample_next_words(std::string_view context, std::uint32_t n,
                                                std::uint64_t seed) {
  const auto words = sample_words(oracle_->encode(context), n, seed);
  auto batch = make_batch(context, words, n, seed, id());
  batch.cost.requests = 1;
  return batch;
}

SampleBatch OracleBackend::do_sample_next_tokens(std::string_view context, std::uint32_t n,
                                                 std::uint64_t seed) {
  return do_sample_next_words(context, n, seed);
}

std::vector<Word> OracleBackend::do_tokenize_units(std::string_view text) {
  return tokenize_words(text);
}

Continuations OracleBackend::do_generate_continuation(std::string_view context,
                                                      std::uint32_t max_words, std::uint32_t n,
                                                      std::uint64_t seed) {
  const auto state = oracle_->encode(context);
  Continuations out;
  out.sequences.reserve(n);
  for (std::uint32_t j = 0; j < n; ++j) {
    out.sequences.push_back(continuation(state, max_words, seed, j));
  }
  out.cost.requests = 1;
  return out;
}

CandidateList OracleBackend::do_top_candidates(std::string_view context, std::uint32_t top_k) {
  CandidateList out;
  out.candidates = ranked_candidates(oracle_->encode(context), top_k);
  out.cost.requests = 1;
  return out;
}

double OracleBackend::do_unit_logprob(std::string_view context, std::string_view unit) {
  const auto p = tempered(oracle_->encode(context));
  return std::log(p[oracle_->id_of(fold(unit))]);
}

Distribution OracleBackend::next_word_distribution(std::string_view context) {
  const auto p = tempered(oracle_->encode(context));
  Distribution out;
  out.reserve(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out.emplace_back(oracle_->vocabulary()[i], p[i]);
  return out;
}

}  // namespace mia
