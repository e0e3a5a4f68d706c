#include "mia/attack.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <optional>

#include "mia/digest.hpp"
#include "mia/errors.hpp"
#include "mia/parallel.hpp"

namespace mia {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_relative(Method m) {
  return m == Method::simmia || m == Method::simmia_star || m == Method::simmia_samia_sampling;
}

bool is_wordwise(Method m) {
  return m == Method::simmia || m == Method::simmia_star || m == Method::simmia_no_relative;
}

bool is_loss_family(Method m) { return m == Method::loss || m == Method::mink; }

bool uses_continuations(Method m) {
  return m == Method::samia || m == Method::simmia_samia_sampling;
}

// Errors that invalidate only the document being scored.
bool is_document_error(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const CacheMiss&) {
    return false;
  } catch (const UnsupportedCapability&) {
    return false;
  } catch (const ProviderError&) {
    return false;
  } catch (const BudgetError&) {
    return true;
  } catch (const BackendError&) {
    return true;
  } catch (const DataError&) {
    return true;
  } catch (...) {
    return false;
  }
}

ErrorCategory category_of(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const Error& ex) {
    return ex.category();
  } catch (...) {
    return ErrorCategory::data;
  }
}

std::string message_of(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const std::exception& ex) {
    return ex.what();
  } catch (...) {
    return "unknown error";
  }
}

}  // namespace

const char* to_string(Method method) {
  switch (method) {
    case Method::simmia:
      return "simmia";
    case Method::simmia_star:
      return "simmia_star";
    case Method::samia:
      return "samia";
    case Method::loss:
      return "loss";
    case Method::mink:
      return "mink";
    case Method::simmia_no_relative:
      return "simmia_no_relative";
    case Method::simmia_samia_sampling:
      break;
  }
  return "simmia_samia_sampling";
}

Method method_from_string(std::string_view name) {
  for (auto m : {Method::simmia, Method::simmia_star, Method::samia, Method::loss, Method::mink,
                 Method::simmia_no_relative, Method::simmia_samia_sampling}) {
    if (name == to_string(m)) return m;
  }
  throw ConfigError("unknown method '" + std::string(name) + "'");
}

const char* to_string(Unit unit) { return unit == Unit::word ? "word" : "token"; }

Unit unit_from_string(std::string_view name) {
  if (name == "word") return Unit::word;
  if (name == "token") return Unit::token;
  throw ConfigError("unknown unit '" + std::string(name) + "'");
}

void AttackConfig::validate() const {
  if (n_samples < 1) throw ConfigError("N must be at least 1");
  if (!(prefix_ratio > 0.0 && prefix_ratio < 1.0)) {
    throw ConfigError("prefix_ratio must lie in (0, 1)");
  }
  if (start_index < 2) throw ConfigError("start_index must be at least 2");
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (!(denom_floor > 0.0)) throw ConfigError("denominator floor must be positive");
  if (rouge_order < 1) throw ConfigError("rouge_order must be at least 1");
  if (!(mink_fraction > 0.0 && mink_fraction <= 1.0)) {
    throw ConfigError("mink_fraction must lie in (0, 1]");
  }
  if (top_k < 1) throw ConfigError("top_k must be at least 1");
  if (concurrency < 1) throw ConfigError("concurrency must be at least 1");
  if (exact_mode && uses_continuations(method)) {
    throw ConfigError(std::string("exact mode does not apply to ") + to_string(method));
  }
  if (logprob_weighted) {
    if (method != Method::simmia && method != Method::simmia_no_relative) {
      throw ConfigError("logprob weighting applies to simmia and simmia_no_relative only");
    }
    if (exact_mode) throw ConfigError("logprob weighting and exact mode are exclusive");
  }
  if (uses_shots() && shots == 0) {
    throw ConfigError(std::string(to_string(method)) + " needs at least one non-member shot");
  }
}

bool AttackConfig::uses_shots() const { return is_relative(method); }

bool AttackConfig::needs_embeddings() const {
  return method == Method::simmia || method == Method::simmia_no_relative ||
         method == Method::simmia_samia_sampling;
}

std::string AttackConfig::parameters_json() const {
  const nlohmann::json j = {{"method", to_string(method)},
                            {"N", n_samples},
                            {"T", uses_shots() ? shots : 0},
                            {"prefix_ratio", prefix_ratio},
                            {"start_index", start_index},
                            {"alpha", alpha},
                            {"denom_floor", denom_floor},
                            {"master_seed", master_seed},
                            {"delimiter", delimiter},
                            {"numeric_exact", numeric_exact},
                            {"rouge_order", rouge_order},
                            {"mink_fraction", mink_fraction},
                            {"exact_mode", exact_mode},
                            {"unit", to_string(unit)},
                            {"logprob_weighted", logprob_weighted},
                            {"top_k", top_k}};
  return j.dump();
}

double rouge_n_recall(std::span<const std::string> candidate,
                      std::span<const std::string> reference, int n) {
  const auto order = static_cast<std::size_t>(n);
  if (n < 1 || reference.size() < order) {
    throw DataError("reference has fewer than " + std::to_string(n) + " words");
  }
  const auto grams = [order](std::span<const std::string> words) {
    std::map<std::vector<std::string>, std::size_t> out;
    for (std::size_t i = 0; i + order <= words.size(); ++i) {
      ++out[std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(i),
                                     words.begin() + static_cast<std::ptrdiff_t>(i + order))];
    }
    return out;
  };
  const auto ref = grams(reference);
  const auto cand = grams(candidate);
  std::size_t overlap = 0;
  for (const auto& [g, c] : ref) {
    auto it = cand.find(g);
    if (it != cand.end()) overlap += std::min(c, it->second);
  }
  return static_cast<double>(overlap) / static_cast<double>(reference.size() - order + 1);
}

double relative_score_from_trace(std::span<const TraceEntry> trace) {
  double sum = 0.0;
  for (const auto& t : trace) sum += t.ratio;
  return -sum / static_cast<double>(trace.size());
}

double plain_score_from_trace(std::span<const TraceEntry> trace) {
  double sum = 0.0;
  for (const auto& t : trace) sum += t.s_plain;
  return sum / static_cast<double>(trace.size());
}

struct Attack::Item {
  enum class Kind { score, logprob, continuation };
  std::size_t doc;
  Kind kind;
  std::size_t position;
  Condition condition;
};

struct Attack::DocState {
  const Document* doc = nullptr;
  std::vector<Document> shots;
  std::vector<Word> units;  // scoring targets: words, or backend tokens
  std::size_t first = 0;    // first scored position (1-based)
  std::size_t last = 0;     // last scored position
  std::size_t split = 0;    // continuation methods: words in the prefix
  std::vector<double> plain;
  std::vector<double> prefixed;
  std::vector<double> logprobs;
  Continuations continuations[2];

  std::mutex mutex;
  std::string error;
  ErrorCategory category = ErrorCategory::data;
  CallCost cost;
  double seconds = 0.0;

  void invalidate(const std::string& why, ErrorCategory why_category = ErrorCategory::data) {
    std::lock_guard lock(mutex);
    if (error.empty()) {
      error = why;
      category = why_category;
    }
  }
  std::string prefix(std::size_t position) const {
    return doc->text.substr(0, units[position - 1].span.begin);
  }
};

Attack::Attack(BackendPtr backend, std::shared_ptr<const EmbeddingTable> table,
               AttackConfig config)
    : backend_(std::move(backend)), table_(std::move(table)), config_(std::move(config)) {
  if (!backend_) throw ConfigError("attack needs a backend");
  config_.validate();
  if (config_.needs_embeddings() && !table_) {
    throw ConfigError(std::string(to_string(config_.method)) + " needs an embedding table");
  }
}

void Attack::plan(DocState& s) const {
  const Method m = config_.method;
  for (const auto& shot : s.shots) {
    if (shot.id == s.doc->id) {
      throw DataError("document '" + s.doc->id + "' appears in its own shot set");
    }
  }
  if (uses_continuations(m)) {
    s.units = s.doc->words;
    const std::size_t L = s.units.size();
    s.split = static_cast<std::size_t>(std::ceil(config_.prefix_ratio * static_cast<double>(L)));
    if (L < 2 || s.split >= L) {
      s.invalidate("document has " + std::to_string(L) + " words, too short to split");
      return;
    }
    if (m == Method::samia && L - s.split < static_cast<std::size_t>(config_.rouge_order)) {
      s.invalidate("suffix shorter than the ROUGE order");
      return;
    }
    s.first = s.split + 1;
    s.last = L;
    return;
  }
  if (config_.unit == Unit::token) {
    s.units = backend_->tokenize_units(s.doc->text);
  } else {
    s.units = s.doc->words;
  }
  const std::size_t L = s.units.size();
  const std::size_t first = is_loss_family(m) ? 2 : config_.start_index;
  if (L < first) {
    s.invalidate("document has " + std::to_string(L) + " units, fewer than start position " +
                 std::to_string(first));
    return;
  }
  s.first = first;
  s.last = L;
}

CallCost Attack::execute(DocState& s, const Item& item) const {
  CallCost cost;
  const std::string& id = s.doc->id;
  const char* condition = to_string(item.condition);
  switch (item.kind) {
    case Item::Kind::score: {
      std::string context = s.prefix(item.position);
      if (item.condition == Condition::shot_prefixed) {
        context = join_shots(s.shots, context, config_.delimiter);
      }
      const auto seed = derive_seed(config_.master_seed, id, item.position, condition);
      const double v = unit_score(s.units[item.position - 1], context, seed, cost);
      auto& column = item.condition == Condition::plain ? s.plain : s.prefixed;
      column[item.position - s.first] = v;
      break;
    }
    case Item::Kind::logprob: {
      const auto& target = s.units[item.position - 1];
      s.logprobs[item.position - s.first] =
          backend_->unit_logprob(s.prefix(item.position), target.surface);
      cost.requests = 1;
      break;
    }
    case Item::Kind::continuation: {
      std::string context = s.doc->text.substr(0, s.units[s.split].span.begin);
      if (item.condition == Condition::shot_prefixed) {
        context = join_shots(s.shots, context, config_.delimiter);
      }
      const auto seed = derive_seed(config_.master_seed, id, s.split, condition);
      const auto max_words = static_cast<std::uint32_t>(s.units.size() - s.split);
      auto& slot = s.continuations[item.condition == Condition::plain ? 0 : 1];
      slot = backend_->generate_continuation(context, max_words, config_.n_samples, seed);
      cost = slot.cost;
      break;
    }
  }
  return cost;
}

double Attack::unit_score(const Word& target, std::string_view context, std::uint64_t seed,
                          CallCost& cost) const {
  const bool empirical = config_.method == Method::simmia_star;
  const SmoothingConfig smoothing{config_.alpha};
  if (config_.exact_mode) {
    const auto dist = backend_->next_word_distribution(context);
    cost.requests += 1;
    if (empirical) return exact_expected_empirical(target, dist, config_.n_samples, smoothing);
    return exact_expected_semantic(target, dist, *table_, config_.numeric_exact);
  }
  if (config_.logprob_weighted) {
    const auto list = backend_->top_candidates_with_logprobs(context, config_.top_k);
    cost += list.cost;
    return weighted_semantic_score(target, list.candidates, *table_, config_.numeric_exact).value;
  }
  const auto batch = config_.unit == Unit::token
                         ? backend_->sample_next_tokens(context, config_.n_samples, seed)
                         : backend_->sample_next_words(context, config_.n_samples, seed);
  cost += batch.cost;
  if (empirical) return empirical_score(target, batch, smoothing).value;
  return semantic_score(target, batch, *table_, config_.numeric_exact).value;
}

std::vector<MembershipScore> Attack::run(std::span<const Document> docs,
                                         const ShotProvider& shots) const {
  const Method m = config_.method;
  std::vector<std::unique_ptr<DocState>> states;
  std::vector<Item> items;
  states.reserve(docs.size());
  for (std::size_t d = 0; d < docs.size(); ++d) {
    auto s = std::make_unique<DocState>();
    s->doc = &docs[d];
    if (config_.uses_shots()) {
      s->shots = shots ? shots(docs[d]) : std::vector<Document>{};
      if (s->shots.empty()) {
        throw ConfigError(std::string(to_string(m)) + " needs a non-empty shot set");
      }
    }
    try {
      plan(*s);
    } catch (const DataError& e) {
      s->invalidate(e.what());
    }
    if (s->error.empty()) {
      const std::size_t width = s->last - s->first + 1;
      if (uses_continuations(m)) {
        items.push_back({d, Item::Kind::continuation, s->split, Condition::plain});
        if (m == Method::simmia_samia_sampling) {
          items.push_back({d, Item::Kind::continuation, s->split, Condition::shot_prefixed});
        }
      } else if (is_loss_family(m)) {
        s->logprobs.assign(width, kNaN);
        for (std::size_t i = s->first; i <= s->last; ++i) {
          items.push_back({d, Item::Kind::logprob, i, Condition::plain});
        }
      } else {
        s->plain.assign(width, kNaN);
        if (is_relative(m)) s->prefixed.assign(width, kNaN);
        for (std::size_t i = s->first; i <= s->last; ++i) {
          items.push_back({d, Item::Kind::score, i, Condition::plain});
          if (is_relative(m)) items.push_back({d, Item::Kind::score, i, Condition::shot_prefixed});
        }
      }
    }
    states.push_back(std::move(s));
  }

  std::vector<CallCost> costs(items.size());
  std::vector<double> seconds(items.size(), 0.0);
  std::atomic<bool> stop{false};
  std::mutex fatal_mutex;
  std::exception_ptr fatal;
  const std::size_t workers = std::min(config_.concurrency, backend_->max_inflight());
  parallel_for(items.size(), workers, stop, [&](std::size_t k) {
    const Item& item = items[k];
    DocState& s = *states[item.doc];
    {
      std::lock_guard lock(s.mutex);
      if (!s.error.empty()) return;
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
      costs[k] = execute(s, item);
    } catch (...) {
      auto e = std::current_exception();
      if (is_document_error(e)) {
        s.invalidate(message_of(e), category_of(e));
      } else {
        std::lock_guard lock(fatal_mutex);
        if (!fatal) fatal = e;
        stop = true;
      }
    }
    seconds[k] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  });
  if (fatal) std::rethrow_exception(fatal);

  for (std::size_t k = 0; k < items.size(); ++k) {
    states[items[k].doc]->cost += costs[k];
    states[items[k].doc]->seconds += seconds[k];
  }

  std::vector<MembershipScore> results;
  results.reserve(states.size());
  for (auto& sp : states) {
    DocState& s = *sp;
    MembershipScore r;
    r.doc_id = s.doc->id;
    r.method = m;
    r.label = s.doc->label;
    for (const auto& shot : s.shots) r.shot_ids.push_back(shot.id);
    r.cost = s.cost;
    r.n_queries = s.cost.requests + s.cost.retries;
    r.wall_time = s.seconds;
    if (!s.error.empty()) {
      r.valid = false;
      r.error = s.error;
      r.error_category = s.category;
      r.score = kNaN;
      results.push_back(std::move(r));
      continue;
    }
    try {
      if (is_wordwise(m)) {
        for (std::size_t i = s.first; i <= s.last; ++i) {
          TraceEntry t;
          t.position = i;
          t.s_plain = s.plain[i - s.first];
          if (is_relative(m)) {
            t.s_prefixed = s.prefixed[i - s.first];
            t.ratio = t.s_prefixed / std::max(t.s_plain, config_.denom_floor);
          } else {
            t.s_prefixed = kNaN;
            t.ratio = kNaN;
          }
          r.trace.push_back(t);
        }
        r.score = is_relative(m) ? relative_score_from_trace(r.trace)
                                 : plain_score_from_trace(r.trace);
      } else if (m == Method::simmia_samia_sampling) {
        const auto column = [&](const Continuations& c, std::size_t j) {
          std::vector<std::string> words;
          words.reserve(config_.n_samples);
          for (const auto& seq : c.sequences) {
            words.push_back(j < seq.size() ? seq[j] : std::string(kEmptySentinel));
          }
          // Continuations the backend never returned count as sentinels too.
          while (words.size() < config_.n_samples) words.emplace_back(kEmptySentinel);
          return make_batch({}, words, config_.n_samples, 0, backend_->id());
        };
        for (std::size_t i = s.first; i <= s.last; ++i) {
          const auto& target = s.units[i - 1];
          const std::size_t j = i - s.first;
          TraceEntry t;
          t.position = i;
          t.s_plain = semantic_score(target, column(s.continuations[0], j), *table_,
                                     config_.numeric_exact).value;
          t.s_prefixed = semantic_score(target, column(s.continuations[1], j), *table_,
                                        config_.numeric_exact).value;
          t.ratio = t.s_prefixed / std::max(t.s_plain, config_.denom_floor);
          r.trace.push_back(t);
        }
        r.score = relative_score_from_trace(r.trace);
      } else if (m == Method::samia) {
        std::vector<std::string> reference;
        for (std::size_t i = s.first; i <= s.last; ++i) reference.push_back(s.units[i - 1].folded);
        double sum = 0.0;
        for (const auto& seq : s.continuations[0].sequences) {
          sum += rouge_n_recall(seq, reference, config_.rouge_order);
        }
        r.score = sum / static_cast<double>(config_.n_samples);
      } else {
        std::vector<double> lps = s.logprobs;
        if (m == Method::mink) {
          std::sort(lps.begin(), lps.end());
          const auto k = static_cast<std::size_t>(
              std::ceil(config_.mink_fraction * static_cast<double>(lps.size())));
          lps.resize(std::max<std::size_t>(1, std::min(k, lps.size())));
        }
        double sum = 0.0;
        for (double lp : lps) sum += lp;
        r.score = sum / static_cast<double>(lps.size());
      }
    } catch (const DataError& e) {
      r.valid = false;
      r.error = e.what();
      r.score = kNaN;
      r.trace.clear();
    }
    results.push_back(std::move(r));
  }
  return results;
}

std::vector<MembershipScore> Attack::run(const Benchmark& bench,
                                         const ShotSelection& selection) const {
  std::optional<TfidfIndex> index;
  if (config_.uses_shots() && selection.strategy != ShotStrategy::fixed &&
      selection.strategy != ShotStrategy::random) {
    index.emplace(TfidfIndex::over(bench));
  }
  const ShotProvider provider = [&](const Document& doc) {
    return select_shots(bench, doc, selection, index ? &*index : nullptr);
  };
  return run(bench.documents, provider);
}

MembershipScore Attack::score(const Document& doc, std::span<const Document> shots) const {
  const std::vector<Document> fixed(shots.begin(), shots.end());
  return run(std::span<const Document>(&doc, 1), [&](const Document&) { return fixed; }).front();
}

}  // namespace mia
