#include "mia/benchkit.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "mia/digest.hpp"
#include "mia/errors.hpp"
#include "mia/log.hpp"
#include "mia/rng.hpp"

namespace mia {
namespace {

using json = nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Label parse_label(const json& v, std::size_t line) {
  if (v.is_null()) return Label::unknown;
  if (v.is_boolean()) return v.get<bool>() ? Label::member : Label::non_member;
  if (v.is_number()) {
    const double x = v.get<double>();
    if (x == 1.0) return Label::member;
    if (x == 0.0) return Label::non_member;
  }
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "1" || s == "member") return Label::member;
    if (s == "0" || s == "non_member") return Label::non_member;
  }
  throw DataError("line " + std::to_string(line) + ": unrecognized label " + v.dump());
}

json label_json(Label label) {
  switch (label) {
    case Label::member:
      return 1;
    case Label::non_member:
      return 0;
    case Label::unknown:
      break;
  }
  return nullptr;
}

void write_jsonl(const std::filesystem::path& path, std::span<const Document> docs,
                 const JsonlFields& fields) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (const auto& d : docs) {
    out << json{{fields.id, d.id}, {fields.text, d.text}, {fields.label, label_json(d.label)}}.dump()
        << '\n';
  }
  if (!out) throw DataError("cannot write " + path.string());
}

}  // namespace

std::size_t Benchmark::count(Label label) const {
  return static_cast<std::size_t>(std::count_if(
      documents.begin(), documents.end(), [&](const Document& d) { return d.label == label; }));
}

static Benchmark parse_records(std::string_view content, std::string name,
                               const JsonlFields& fields) {
  Benchmark bench;
  bench.name = std::move(name);
  bench.fields = fields;
  bench.source_digest = sha256_hex(content);
  std::size_t line_no = 0;
  while (!content.empty()) {
    const auto nl = content.find('\n');
    std::string_view line = content.substr(0, nl);
    content = nl == std::string_view::npos ? std::string_view{} : content.substr(nl + 1);
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!record.is_object() || !record.contains(fields.text) || !record[fields.text].is_string()) {
      throw DataError("line " + std::to_string(line_no) + ": missing string field '" +
                      fields.text + "'");
    }
    const Label label =
        record.contains(fields.label) ? parse_label(record[fields.label], line_no) : Label::unknown;
    std::string id = bench.name + ":" + std::to_string(line_no);
    if (!fields.id.empty() && record.contains(fields.id) && record[fields.id].is_string()) {
      id = record[fields.id].get<std::string>();
    }
    bench.documents.push_back(make_document(std::move(id), record[fields.text].get<std::string>(), label));
  }
  if (bench.documents.empty()) throw DataError("dataset '" + bench.name + "' has no documents");
  return bench;
}

Benchmark parse_jsonl(std::string_view content, std::string name, const JsonlFields& fields) {
  Benchmark bench = parse_records(content, std::move(name), fields);
  if (bench.count(Label::member) == 0) {
    log_warn("dataset '" + bench.name + "' contains no members");
  }
  return bench;
}

Benchmark load_jsonl(const std::filesystem::path& path, const JsonlFields& fields) {
  return parse_jsonl(read_file(path), path.stem().string(), fields);
}

void reserve_prefix_pool(Benchmark& bench, std::size_t pool_size, std::uint64_t seed) {
  if (!bench.prefix_pool.empty()) throw ConfigError("prefix pool already reserved");
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < bench.documents.size(); ++i) {
    if (bench.documents[i].label == Label::non_member) candidates.push_back(i);
  }
  if (candidates.size() < pool_size) {
    throw DataError("prefix pool of " + std::to_string(pool_size) + " needs that many non-members, " +
                    "dataset has " + std::to_string(candidates.size()));
  }
  Engine rng(seed);
  shuffle_prefix(candidates, pool_size, rng);
  candidates.resize(pool_size);
  std::sort(candidates.begin(), candidates.end());

  std::vector<bool> in_pool(bench.documents.size(), false);
  for (auto i : candidates) in_pool[i] = true;
  std::vector<Document> remaining;
  for (std::size_t i = 0; i < bench.documents.size(); ++i) {
    (in_pool[i] ? bench.prefix_pool : remaining).push_back(std::move(bench.documents[i]));
  }
  bench.documents = std::move(remaining);
  bench.pool_seed = seed;
}

std::optional<Document> truncate_to_bucket(const Document& doc, std::size_t bucket) {
  const auto end = whitespace_token_end(doc.text, bucket);
  if (!end) return std::nullopt;
  Document out = make_document(doc.id, doc.text.substr(0, *end), doc.label);
  out.meta = doc.meta;
  return out;
}

void apply_length_bucket(Benchmark& bench, std::size_t bucket) {
  if (bucket == 0) throw ConfigError("length bucket must be positive");
  const auto cut = [&](std::vector<Document>& docs) {
    std::vector<Document> kept;
    for (const auto& d : docs) {
      if (auto t = truncate_to_bucket(d, bucket)) {
        kept.push_back(std::move(*t));
      } else {
        ++bench.skipped_short;
      }
    }
    docs = std::move(kept);
  };
  cut(bench.documents);
  cut(bench.prefix_pool);
  bench.length_bucket = bucket;
}

TfidfIndex::TfidfIndex(std::span<const Document* const> corpus) : n_docs_(corpus.size()) {
  for (const auto* doc : corpus) {
    std::vector<std::string> seen;
    for (const auto& w : doc->words) seen.push_back(w.folded);
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    for (auto& w : seen) {
      auto [it, inserted] = terms_.try_emplace(std::move(w), static_cast<int>(terms_.size()), 0);
      ++it->second.second;
    }
  }
}

TfidfIndex TfidfIndex::over(const Benchmark& bench) {
  std::vector<const Document*> corpus;
  for (const auto& d : bench.prefix_pool) corpus.push_back(&d);
  for (const auto& d : bench.documents) corpus.push_back(&d);
  return TfidfIndex(corpus);
}

double TfidfIndex::idf(std::string_view folded) const {
  auto it = terms_.find(std::string(folded));
  const double df = it == terms_.end() ? 0.0 : static_cast<double>(it->second.second);
  return std::log((1.0 + static_cast<double>(n_docs_)) / (1.0 + df)) + 1.0;
}

double TfidfIndex::similarity(const Document& a, const Document& b) const {
  if (a.words.empty() || b.words.empty()) return 0.0;
  // Both vectors live on the union of the two documents' words.
  std::map<std::string, std::pair<double, double>> tf;
  for (const auto& w : a.words) tf[w.folded].first += 1.0;
  for (const auto& w : b.words) tf[w.folded].second += 1.0;
  SparseVector va(static_cast<Eigen::Index>(tf.size()));
  SparseVector vb(static_cast<Eigen::Index>(tf.size()));
  int id = 0;
  for (const auto& [word, counts] : tf) {
    const double weight = idf(word);
    if (counts.first > 0.0) va.insert(id) = counts.first * weight;
    if (counts.second > 0.0) vb.insert(id) = counts.second * weight;
    ++id;
  }
  const double na = va.norm();
  const double nb = vb.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  const double cos = va.dot(vb) / (na * nb);
  return std::clamp(cos, 0.0, 1.0);
}

const char* to_string(ShotStrategy strategy) {
  switch (strategy) {
    case ShotStrategy::fixed:
      return "fixed";
    case ShotStrategy::random:
      return "random";
    case ShotStrategy::tfidf_most:
      return "tfidf_most";
    case ShotStrategy::tfidf_moderate:
      return "tfidf_moderate";
    case ShotStrategy::tfidf_least:
      break;
  }
  return "tfidf_least";
}

ShotStrategy shot_strategy_from_string(std::string_view name) {
  for (auto s : {ShotStrategy::fixed, ShotStrategy::random, ShotStrategy::tfidf_most,
                 ShotStrategy::tfidf_moderate, ShotStrategy::tfidf_least}) {
    if (name == to_string(s)) return s;
  }
  throw ConfigError("unknown shot strategy '" + std::string(name) + "'");
}

std::vector<Document> select_shots(const Benchmark& bench, const Document& doc,
                                   const ShotSelection& selection, const TfidfIndex* index) {
  const auto& pool = bench.prefix_pool;
  for (const auto& p : pool) {
    if (p.id == doc.id) throw DataError("document '" + doc.id + "' is part of its own shot pool");
  }
  if (selection.count > pool.size()) {
    throw ConfigError("requested " + std::to_string(selection.count) + " shots from a pool of " +
                      std::to_string(pool.size()));
  }
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);

  switch (selection.strategy) {
    case ShotStrategy::fixed:
      order.resize(selection.count);
      break;
    case ShotStrategy::random: {
      Engine rng(derive_seed(selection.seed, doc.id, 0, "shots"));
      shuffle_prefix(order, selection.count, rng);
      order.resize(selection.count);
      break;
    }
    default: {
      std::optional<TfidfIndex> local;
      if (index == nullptr) index = &local.emplace(TfidfIndex::over(bench));
      std::vector<double> sim(pool.size());
      for (std::size_t i = 0; i < pool.size(); ++i) sim[i] = index->similarity(doc, pool[i]);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return sim[a] > sim[b]; });
      const std::size_t tier = selection.strategy == ShotStrategy::tfidf_most       ? 0
                               : selection.strategy == ShotStrategy::tfidf_moderate ? 1
                                                                                    : 2;
      const std::size_t begin = tier * pool.size() / 3;
      const std::size_t end = (tier + 1) * pool.size() / 3;
      if (selection.count > end - begin) {
        throw ConfigError("requested " + std::to_string(selection.count) +
                          " shots from a TF-IDF tier of " + std::to_string(end - begin));
      }
      order = std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                       order.begin() + static_cast<std::ptrdiff_t>(begin + selection.count));
      break;
    }
  }
  std::vector<Document> shots;
  shots.reserve(order.size());
  for (auto i : order) shots.push_back(pool[i]);
  return shots;
}

std::string benchmark_manifest_json(const Benchmark& bench) {
  const auto ids = [](const std::vector<Document>& docs) {
    std::vector<std::string> out;
    for (const auto& d : docs) out.push_back(d.id);
    return out;
  };
  std::string texts;
  for (const auto* set : {&bench.prefix_pool, &bench.documents}) {
    for (const auto& d : *set) {
      texts += d.id + '\x1f' + d.text + '\x1f' + to_string(d.label) + '\x1e';
    }
  }
  json m = {{"name", bench.name},
            {"source_digest", bench.source_digest},
            {"fields", {{"text", bench.fields.text}, {"label", bench.fields.label}, {"id", bench.fields.id}}},
            {"length_bucket", bench.length_bucket ? json(*bench.length_bucket) : json(nullptr)},
            {"skipped_short", bench.skipped_short},
            {"pool_size", bench.prefix_pool.size()},
            {"pool_seed", bench.pool_seed},
            {"pool_ids", ids(bench.prefix_pool)},
            {"document_ids", ids(bench.documents)},
            {"content_digest", sha256_hex(texts)}};
  return m.dump(2);
}

std::string benchmark_digest(const Benchmark& bench) {
  return sha256_hex(benchmark_manifest_json(bench));
}

void write_prepared(const Benchmark& bench, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const JsonlFields fields;  // prepared files always use the default field names
  write_jsonl(dir / "eval.jsonl", bench.documents, fields);
  write_jsonl(dir / "pool.jsonl", bench.prefix_pool, fields);
  std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  out << benchmark_manifest_json(bench) << '\n';
  if (!out) throw DataError("cannot write " + (dir / "manifest.json").string());
}

Benchmark load_prepared(const std::filesystem::path& dir) {
  json m;
  try {
    m = json::parse(read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw DataError("bad benchmark manifest in " + dir.string() + ": " + e.what());
  }
  Benchmark bench = parse_jsonl(read_file(dir / "eval.jsonl"), m.at("name").get<std::string>());
  const auto pool_text = read_file(dir / "pool.jsonl");
  if (pool_text.find_first_not_of(" \t\r\n") != std::string::npos) {
    bench.prefix_pool = parse_records(pool_text, bench.name, {}).documents;
  }
  bench.fields.text = m.at("fields").at("text").get<std::string>();
  bench.fields.label = m.at("fields").at("label").get<std::string>();
  bench.fields.id = m.at("fields").value("id", std::string("id"));
  bench.source_digest = m.at("source_digest").get<std::string>();
  if (!m.at("length_bucket").is_null()) bench.length_bucket = m["length_bucket"].get<std::size_t>();
  bench.skipped_short = m.at("skipped_short").get<std::size_t>();
  bench.pool_seed = m.at("pool_seed").get<std::uint64_t>();
  return bench;
}

}  // namespace mia
