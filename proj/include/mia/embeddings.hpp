#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mia/errors.hpp"
#include "mia/sample_batch.hpp"
#include "mia/textseg.hpp"

namespace mia {

enum class OovPolicy { exact_match_fallback, fixed_half };

const char* to_string(OovPolicy policy);
OovPolicy oov_policy_from_string(std::string_view name);

/// Cosine of two dense vectors; NaN when either has zero norm.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine(const Eigen::MatrixBase<DerivedA>& a,
                                 const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (na == Scalar(0) || nb == Scalar(0)) return std::numeric_limits<Scalar>::quiet_NaN();
  return a.dot(b) / (na * nb);
}

/// (cos + 1) / 2 clamped to [0, 1].
template <typename Scalar>
double shifted_cosine(Scalar cos) {
  const double c = std::clamp(static_cast<double>(cos), -1.0, 1.0);
  return (c + 1.0) / 2.0;
}

/// Word vectors keyed by folded form. Rows are kept normalized alongside the
/// raw values so similarity is a single dot product.
template <typename Scalar>
class BasicEmbeddingTable {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using ConstMap = Eigen::Map<const Vector>;

  /// A zero `dim` is adopted from the first inserted vector.
  explicit BasicEmbeddingTable(std::size_t dim = 0,
                               OovPolicy policy = OovPolicy::exact_match_fallback,
                               std::string source_id = {})
      : dim_(dim), policy_(policy), source_id_(std::move(source_id)) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return words_.size(); }
  OovPolicy oov_policy() const { return policy_; }
  void set_oov_policy(OovPolicy policy) { policy_ = policy; }
  const std::string& source_id() const { return source_id_; }
  const std::vector<std::string>& words() const { return words_; }
  /// Duplicate entries skipped by insert() or merge().
  std::size_t duplicates_skipped() const { return duplicates_; }

  /// Adds `word` (folded) unless already present; returns false for duplicates.
  template <typename Derived>
  bool insert(std::string_view word, const Eigen::MatrixBase<Derived>& v) {
    if (dim_ == 0 && words_.empty() && v.size() > 0) dim_ = static_cast<std::size_t>(v.size());
    if (static_cast<std::size_t>(v.size()) != dim_) {
      throw DataError("vector for '" + std::string(word) + "' has dimension " +
                      std::to_string(v.size()) + ", table has " + std::to_string(dim_));
    }
    if (!v.allFinite()) throw DataError("vector for '" + std::string(word) + "' is not finite");
    std::string key = fold(word);
    if (index_.count(key) != 0) {
      ++duplicates_;
      return false;
    }
    const std::size_t row = words_.size();
    index_.emplace(key, row);
    words_.push_back(std::move(key));
    data_.resize(data_.size() + dim_);
    unit_.resize(unit_.size() + dim_);
    Eigen::Map<Vector> raw(data_.data() + row * dim_, dim_);
    Eigen::Map<Vector> unit(unit_.data() + row * dim_, dim_);
    raw = v.template cast<Scalar>();
    const Scalar norm = raw.norm();
    nonzero_.push_back(norm > Scalar(0));
    if (norm > Scalar(0)) {
      unit = raw / norm;
    } else {
      unit.setZero();
    }
    return true;
  }

  bool insert(std::string_view word, std::span<const Scalar> values) {
    return insert(word, ConstMap(values.data(), static_cast<Eigen::Index>(values.size())));
  }

  /// Copies in every entry of `fragment` not already present.
  void merge(const BasicEmbeddingTable& fragment) {
    if (fragment.size() == 0) return;
    if (dim_ == 0 && words_.empty()) dim_ = fragment.dim_;
    if (fragment.dim_ != dim_) {
      throw DataError("embedding fragment dimension " + std::to_string(fragment.dim_) +
                      " does not match table dimension " + std::to_string(dim_));
    }
    for (std::size_t i = 0; i < fragment.size(); ++i) insert(fragment.words_[i], fragment.row(i));
  }

  bool contains(std::string_view word) const { return index_.count(fold(word)) != 0; }

  std::optional<ConstMap> vector(std::string_view word) const {
    auto it = index_.find(fold(word));
    if (it == index_.end()) return std::nullopt;
    return row(it->second);
  }

  /// Similarity in [0, 1] between two words under the table's OOV policy.
  double similarity(std::string_view a, std::string_view b) const {
    if (a == kEmptySentinel || b == kEmptySentinel) return 0.0;
    const std::string fa = fold(a);
    const std::string fb = fold(b);
    return similarity_folded(fa, fb);
  }

  /// As similarity() for inputs that are already folded.
  double similarity_folded(const std::string& fa, const std::string& fb) const {
    if (fa == kEmptySentinel || fb == kEmptySentinel) return 0.0;
    const auto ia = usable_row(fa);
    const auto ib = usable_row(fb);
    if (!ia || !ib) {
      if (policy_ == OovPolicy::fixed_half) return 0.5;
      return fa == fb ? 1.0 : 0.0;
    }
    if (*ia == *ib) return 1.0;
    return shifted_cosine(unit_row(*ia).dot(unit_row(*ib)));
  }

 private:
  ConstMap row(std::size_t i) const {
    return ConstMap(data_.data() + i * dim_, static_cast<Eigen::Index>(dim_));
  }
  ConstMap unit_row(std::size_t i) const {
    return ConstMap(unit_.data() + i * dim_, static_cast<Eigen::Index>(dim_));
  }
  std::optional<std::size_t> usable_row(const std::string& folded) const {
    auto it = index_.find(folded);
    if (it == index_.end() || !nonzero_[it->second]) return std::nullopt;
    return it->second;
  }

  std::size_t dim_;
  OovPolicy policy_;
  std::string source_id_;
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Scalar> data_;
  std::vector<Scalar> unit_;
  std::vector<bool> nonzero_;
  std::size_t duplicates_ = 0;
};

using EmbeddingTable = BasicEmbeddingTable<double>;

/// Parses the plain-text vector format: optional "<count> <dim>" header, then
/// "word v1 ... vd" per line. Throws DataError naming the offending line.
EmbeddingTable load_vectors(const std::filesystem::path& path,
                            OovPolicy policy = OovPolicy::exact_match_fallback);
EmbeddingTable parse_vectors(std::string_view text, std::string source_id,
                             OovPolicy policy = OovPolicy::exact_match_fallback);

/// Client for a remote encoder speaking POST {"inputs": [...]} -> {"vectors": [...]}.
/// Every vector received is persisted under `cache_dir`, keyed by
/// (source_id, word), and later requests for it never touch the network.
class RemoteEmbeddingSource {
 public:
  struct Options {
    std::string base_url;
    std::string path = "/embed";
    std::string source_id;
    std::filesystem::path cache_dir;
    std::chrono::milliseconds timeout{30000};
    std::map<std::string, std::string> headers;
  };

  explicit RemoteEmbeddingSource(Options options);

  /// Vectors for `words` (folded), from the disk cache where possible.
  /// An empty list yields an empty fragment. `expected_dim` guards against
  /// mixing encoders; pass 0 to accept any dimension.
  EmbeddingTable fetch(std::span<const std::string> words, std::size_t expected_dim = 0);

  std::uint64_t network_calls() const { return network_calls_.load(); }
  std::filesystem::path cache_path(std::string_view folded_word) const;

 private:
  std::optional<std::vector<double>> read_cached(const std::string& word) const;
  void write_cached(const std::string& word, const std::vector<double>& v);

  Options options_;
  std::atomic<std::uint64_t> network_calls_{0};
  std::mutex write_mutex_;
};

/// Fetches the words missing from `table` and merges them in.
void fetch_remote_vectors(std::span<const std::string> words, RemoteEmbeddingSource& source,
                          EmbeddingTable& table);

}  // namespace mia
