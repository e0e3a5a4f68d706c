#include "mia/embeddings.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <sstream>
#include <thread>

#include "mia/digest.hpp"
#include "mia/http_util.hpp"

namespace mia {
namespace {

using json = nlohmann::json;

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

bool parse_size(std::string_view s, std::size_t& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

const char* to_string(OovPolicy policy) {
  return policy == OovPolicy::fixed_half ? "fixed_half" : "exact_match_fallback";
}

OovPolicy oov_policy_from_string(std::string_view name) {
  if (name == "exact_match_fallback") return OovPolicy::exact_match_fallback;
  if (name == "fixed_half") return OovPolicy::fixed_half;
  throw ConfigError("unknown OOV policy '" + std::string(name) + "'");
}

EmbeddingTable parse_vectors(std::string_view text, std::string source_id, OovPolicy policy) {
  EmbeddingTable table(0, policy, std::move(source_id));
  std::size_t dim = 0;
  std::size_t line_no = 0;
  bool first = true;
  Eigen::VectorXd values;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    const auto fields = split_spaces(line);
    if (fields.empty()) continue;
    if (first) {
      first = false;
      std::size_t count = 0;
      std::size_t header_dim = 0;
      if (fields.size() == 2 && parse_size(fields[0], count) && parse_size(fields[1], header_dim)) {
        if (header_dim == 0) throw DataError("line " + std::to_string(line_no) + ": zero dimension");
        dim = header_dim;
        continue;
      }
    }
    if (dim == 0) dim = fields.size() - 1;
    if (dim == 0 || fields.size() - 1 != dim) {
      throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                      " values, found " + std::to_string(fields.size() - 1));
    }
    values.resize(static_cast<Eigen::Index>(dim));
    for (std::size_t k = 0; k < dim; ++k) {
      if (!parse_double(fields[k + 1], values[static_cast<Eigen::Index>(k)]) ||
          !std::isfinite(values[static_cast<Eigen::Index>(k)])) {
        throw DataError("line " + std::to_string(line_no) + ": bad value '" +
                        std::string(fields[k + 1]) + "'");
      }
    }
    table.insert(fields[0], values);
  }
  return table;
}

EmbeddingTable load_vectors(const std::filesystem::path& path, OovPolicy policy) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read vector file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw DataError("error reading vector file " + path.string());
  return parse_vectors(buf.str(), path.filename().string(), policy);
}

RemoteEmbeddingSource::RemoteEmbeddingSource(Options options) : options_(std::move(options)) {
  if (options_.base_url.empty()) throw ConfigError("remote embedding source needs a base URL");
  if (options_.source_id.empty()) options_.source_id = options_.base_url + options_.path;
}

std::filesystem::path RemoteEmbeddingSource::cache_path(std::string_view folded_word) const {
  const std::string key = sha256_hex(options_.source_id + '\x1f' + std::string(folded_word));
  return options_.cache_dir / key.substr(0, 2) / (key + ".json");
}

std::optional<std::vector<double>> RemoteEmbeddingSource::read_cached(
    const std::string& word) const {
  if (options_.cache_dir.empty()) return std::nullopt;
  std::ifstream in(cache_path(word));
  if (!in) return std::nullopt;
  try {
    const json entry = json::parse(in);
    if (entry.at("source_id") != options_.source_id || entry.at("word") != word) {
      return std::nullopt;
    }
    return entry.at("vector").get<std::vector<double>>();
  } catch (const json::exception&) {
    return std::nullopt;  // corrupt entries are refetched
  }
}

void RemoteEmbeddingSource::write_cached(const std::string& word, const std::vector<double>& v) {
  if (options_.cache_dir.empty()) return;
  const auto path = cache_path(word);
  const json entry = {{"source_id", options_.source_id}, {"word", word}, {"vector", v}};
  std::lock_guard lock(write_mutex_);
  std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << entry.dump();
    if (!out) throw BackendError("cannot write embedding cache entry " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

EmbeddingTable RemoteEmbeddingSource::fetch(std::span<const std::string> words,
                                            std::size_t expected_dim) {
  EmbeddingTable fragment(expected_dim, OovPolicy::exact_match_fallback, options_.source_id);
  std::vector<std::string> missing;
  for (const auto& raw : words) {
    const std::string w = fold(raw);
    if (fragment.contains(w) ||
        std::find(missing.begin(), missing.end(), w) != missing.end()) {
      continue;
    }
    if (auto cached = read_cached(w)) {
      fragment.insert(w, std::span<const double>(*cached));
    } else {
      missing.push_back(w);
    }
  }
  if (missing.empty()) return fragment;

  ++network_calls_;
  const json request = {{"inputs", missing}};
  const auto response = http_post_json(options_.base_url, options_.path, request.dump(),
                                       options_.headers, options_.timeout);
  if (response.status == 0) {
    throw BackendError("embedding endpoint unreachable: " + response.transport_error);
  }
  if (response.status >= 400 && response.status < 500) {
    throw ProviderError(response.status, "embedding endpoint returned " +
                                             std::to_string(response.status));
  }
  if (response.status != 200) {
    throw BackendError("embedding endpoint returned HTTP " + std::to_string(response.status));
  }
  std::vector<std::vector<double>> vectors;
  try {
    vectors = json::parse(response.body).at("vectors").get<std::vector<std::vector<double>>>();
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed embedding response: ") + e.what());
  }
  if (vectors.size() != missing.size()) {
    throw BackendError("embedding endpoint returned " + std::to_string(vectors.size()) +
                       " vectors for " + std::to_string(missing.size()) + " inputs");
  }
  for (std::size_t i = 0; i < missing.size(); ++i) {
    if (fragment.dim() != 0 && vectors[i].size() != fragment.dim()) {
      throw DataError("remote vector for '" + missing[i] + "' has dimension " +
                      std::to_string(vectors[i].size()) + ", expected " +
                      std::to_string(fragment.dim()));
    }
    fragment.insert(missing[i], std::span<const double>(vectors[i]));
    write_cached(missing[i], vectors[i]);
  }
  return fragment;
}

void fetch_remote_vectors(std::span<const std::string> words, RemoteEmbeddingSource& source,
                          EmbeddingTable& table) {
  std::vector<std::string> wanted;
  for (const auto& w : words) {
    if (!table.contains(w)) wanted.push_back(w);
  }
  table.merge(source.fetch(wanted, table.dim()));
}

}  // namespace mia
