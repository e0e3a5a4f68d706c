#pragma once

#include <Eigen/SparseCore>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mia/textseg.hpp"

namespace mia {

struct JsonlFields {
  std::string text = "input";
  std::string label = "label";
  /// Records carrying this field keep it as their id; others get "<name>:<line>".
  std::string id = "id";
};

struct Benchmark {
  std::string name;
  std::vector<Document> documents;    // evaluation set
  std::vector<Document> prefix_pool;  // reserved non-members
  std::optional<std::size_t> length_bucket;
  std::size_t skipped_short = 0;
  std::uint64_t pool_seed = 0;
  JsonlFields fields;
  std::string source_digest;  // SHA-256 of the raw input bytes

  std::size_t count(Label label) const;
};

Benchmark load_jsonl(const std::filesystem::path& path, const JsonlFields& fields = {});
Benchmark parse_jsonl(std::string_view content, std::string name, const JsonlFields& fields = {});

/// Moves `pool_size` non-members, chosen by a generator seeded with `seed`,
/// from the evaluation set into the prefix pool (kept in file order).
void reserve_prefix_pool(Benchmark& bench, std::size_t pool_size, std::uint64_t seed);

/// Cuts every document after its `bucket`-th whitespace token. Documents with
/// fewer tokens are dropped and counted in skipped_short.
void apply_length_bucket(Benchmark& bench, std::size_t bucket);
std::optional<Document> truncate_to_bucket(const Document& doc, std::size_t bucket);

/// Document frequencies over a fixed collection; vectors use raw term counts
/// of folded words and idf = ln((1 + D) / (1 + df)) + 1, L2-normalized.
class TfidfIndex {
 public:
  using SparseVector = Eigen::SparseVector<double>;

  explicit TfidfIndex(std::span<const Document* const> corpus);
  static TfidfIndex over(const Benchmark& bench);

  /// Cosine of the two documents' vectors, in [0, 1]; 0 for empty documents.
  double similarity(const Document& a, const Document& b) const;
  double idf(std::string_view folded) const;
  std::size_t documents() const { return n_docs_; }

 private:
  std::size_t n_docs_ = 0;
  std::unordered_map<std::string, std::pair<int, std::size_t>> terms_;  // word -> (index, df)
};

enum class ShotStrategy { fixed, random, tfidf_most, tfidf_moderate, tfidf_least };

const char* to_string(ShotStrategy strategy);
ShotStrategy shot_strategy_from_string(std::string_view name);

struct ShotSelection {
  ShotStrategy strategy = ShotStrategy::fixed;
  std::size_t count = 7;
  std::uint64_t seed = 0;
};

/// Non-member shots for `doc`. TF-IDF strategies rank the pool by similarity
/// and split it into thirds at floor(t * P / 3); shots come from the top of
/// the requested third.
std::vector<Document> select_shots(const Benchmark& bench, const Document& doc,
                                   const ShotSelection& selection,
                                   const TfidfIndex* index = nullptr);

/// Reproducibility record of a prepared benchmark.
std::string benchmark_manifest_json(const Benchmark& bench);
std::string benchmark_digest(const Benchmark& bench);

/// Writes eval.jsonl, pool.jsonl and manifest.json under `dir`.
void write_prepared(const Benchmark& bench, const std::filesystem::path& dir);
/// Reads a directory produced by write_prepared.
Benchmark load_prepared(const std::filesystem::path& dir);

}  // namespace mia
