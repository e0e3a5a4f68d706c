#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mia/benchkit.hpp"
#include "mia/embeddings.hpp"
#include "mia/errors.hpp"
#include "mia/scoring.hpp"
#include "mia/targets.hpp"

namespace mia {

enum class Method {
  simmia,
  simmia_star,
  samia,
  loss,
  mink,
  simmia_no_relative,
  simmia_samia_sampling
};

const char* to_string(Method method);
Method method_from_string(std::string_view name);

/// Next-unit granularity: whole words, or backend tokens (TOKENS_VISIBLE).
enum class Unit { word, token };

const char* to_string(Unit unit);
Unit unit_from_string(std::string_view name);

struct AttackConfig {
  Method method = Method::simmia;
  std::uint32_t n_samples = 100;
  std::size_t shots = 7;
  double prefix_ratio = 0.5;
  std::size_t start_index = 2;
  double alpha = 1.0;
  double denom_floor = 1e-6;
  std::uint64_t master_seed = 0;
  std::string delimiter = "\n\n";
  bool numeric_exact = false;
  int rouge_order = 1;
  double mink_fraction = 0.2;
  /// Replace sampling by exact expectations (oracle backends only).
  bool exact_mode = false;
  Unit unit = Unit::word;
  /// Score with reported candidate log probabilities instead of samples.
  bool logprob_weighted = false;
  std::uint32_t top_k = 20;
  std::size_t concurrency = 8;

  void validate() const;
  bool uses_shots() const;
  bool needs_embeddings() const;
  /// Settings that shape the scores, as a JSON object (no backend details).
  std::string parameters_json() const;
};

struct TraceEntry {
  std::size_t position = 0;
  double s_plain = 0.0;
  double s_prefixed = 0.0;  // NaN when the method has no shot-prefixed condition
  double ratio = 0.0;       // NaN when not applicable
};

struct MembershipScore {
  std::string doc_id;
  Method method = Method::simmia;
  Label label = Label::unknown;
  double score = 0.0;
  bool valid = true;
  std::string error;
  ErrorCategory error_category = ErrorCategory::data;  // meaningful when !valid
  std::vector<TraceEntry> trace;
  std::vector<std::string> shot_ids;
  std::uint64_t n_queries = 0;
  CallCost cost;
  double wall_time = 0.0;  // seconds spent in this document's work items
};

/// Unigram-or-higher recall of `candidate` against `reference`, with clipped
/// n-gram counts. Throws DataError if the reference has no n-gram of order n.
double rouge_n_recall(std::span<const std::string> candidate,
                      std::span<const std::string> reference, int n);

/// -(1/m) sum ratio over the trace, accumulated in position order.
double relative_score_from_trace(std::span<const TraceEntry> trace);
/// (1/m) sum s_plain over the trace.
double plain_score_from_trace(std::span<const TraceEntry> trace);

/// Runs one attack method over documents.
///
/// Work is split into (document, position, condition) items that run
/// concurrently up to min(concurrency, backend max_inflight); each item draws
/// with seed derive_seed(master_seed, doc_id, position, condition), so
/// results do not depend on scheduling. Budget and transport failures mark the
/// affected document invalid; configuration, capability, provider and
/// cache-miss errors abort the run.
class Attack {
 public:
  using ShotProvider = std::function<std::vector<Document>(const Document&)>;

  Attack(BackendPtr backend, std::shared_ptr<const EmbeddingTable> table, AttackConfig config);

  const AttackConfig& config() const { return config_; }

  std::vector<MembershipScore> run(std::span<const Document> docs,
                                   const ShotProvider& shots) const;
  std::vector<MembershipScore> run(const Benchmark& bench, const ShotSelection& selection) const;
  MembershipScore score(const Document& doc, std::span<const Document> shots) const;

 private:
  struct DocState;
  struct Item;

  void plan(DocState& state) const;
  CallCost execute(DocState& state, const Item& item) const;

  double unit_score(const Word& target, std::string_view context, std::uint64_t seed,
                    CallCost& cost) const;

  BackendPtr backend_;
  std::shared_ptr<const EmbeddingTable> table_;
  AttackConfig config_;
};

}  // namespace mia
