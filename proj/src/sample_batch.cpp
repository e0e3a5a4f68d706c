#include "mia/sample_batch.hpp"

#include <algorithm>
#include <map>

namespace mia {

const char* to_string(Condition condition) {
  return condition == Condition::plain ? "plain" : "shot_prefixed";
}

std::uint32_t SampleBatch::count_of(std::string_view word) const {
  auto it = std::lower_bound(samples.begin(), samples.end(), word,
                             [](const auto& entry, std::string_view w) { return entry.first < w; });
  return (it != samples.end() && it->first == word) ? it->second : 0;
}

SampleBatch make_batch(std::string_view context, std::span<const std::string> words,
                       std::uint32_t n_requested, std::uint64_t seed, std::string backend_id) {
  std::map<std::string, std::uint32_t> counts;
  for (const auto& w : words) ++counts[w];
  SampleBatch batch;
  batch.context_digest = sha256(context);
  batch.samples.assign(counts.begin(), counts.end());
  batch.n_requested = n_requested;
  batch.n_obtained = static_cast<std::uint32_t>(words.size());
  batch.seed = seed;
  batch.backend_id = std::move(backend_id);
  batch.cost.sentinels = batch.sentinel_count();
  return batch;
}

}  // namespace mia
