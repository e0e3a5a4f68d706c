#include "mia/synth.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "mia/errors.hpp"
#include "mia/rng.hpp"

namespace mia {
namespace {

constexpr std::array<const char*, 16> kSyllables = {"ba", "ko", "mi", "tu", "re", "sa",
                                                    "no", "li", "de", "fu", "ga", "pe",
                                                    "zo", "vi", "ha", "ju"};

// Marsaglia-Tsang; shape < 1 is boosted through shape + 1.
double gamma_draw(double shape, Engine& rng) {
  if (shape < 1.0) {
    const double u = uniform01(rng);
    return gamma_draw(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    const double x = standard_normal(rng);
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = uniform01(rng);
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

struct Transition {
  std::vector<std::size_t> words;
  std::vector<double> cdf;
};

}  // namespace

void SynthConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("synthetic vocabulary needs at least two words");
  if (successors < 1 || successors > vocab_size) {
    throw ConfigError("successors must lie in [1, vocab_size]");
  }
  if (!(concentration > 0.0)) throw ConfigError("concentration must be positive");
  if (!(noise >= 0.0 && noise <= 1.0)) throw ConfigError("noise must lie in [0, 1]");
  if (!(zipf >= 0.0)) throw ConfigError("zipf exponent must be non-negative");
  if (min_words < 1 || max_words <= min_words) {
    throw ConfigError("document length range must be non-empty");
  }
  if (documents < 2) throw ConfigError("need at least two documents");
}

std::string pseudo_word(std::size_t index) {
  std::string out;
  for (int k = 0; k < 2 || index > 0; ++k) {
    out.insert(0, kSyllables[index % kSyllables.size()]);
    index /= kSyllables.size();
  }
  return out;
}

std::vector<Document> generate_corpus(const SynthConfig& config) {
  config.validate();
  Engine rng(config.seed);
  std::vector<double> unigram(config.vocab_size);
  for (std::size_t i = 0; i < unigram.size(); ++i) {
    unigram[i] = 1.0 / std::pow(static_cast<double>(i + 1), config.zipf);
  }
  std::vector<double> unigram_cdf(unigram.size());
  std::partial_sum(unigram.begin(), unigram.end(), unigram_cdf.begin());

  std::vector<std::string> names(config.vocab_size);
  for (std::size_t i = 0; i < names.size(); ++i) names[i] = pseudo_word(i);

  constexpr std::size_t kStart = SIZE_MAX;
  std::map<std::pair<std::size_t, std::size_t>, Transition> table;
  const auto next = [&](std::size_t a, std::size_t b) {
    auto it = table.find({a, b});
    if (it == table.end()) {
      Transition t;
      while (t.words.size() < config.successors) {
        const auto w = sample_cdf(unigram_cdf, uniform01(rng));
        if (std::find(t.words.begin(), t.words.end(), w) == t.words.end()) t.words.push_back(w);
      }
      t.cdf.resize(t.words.size());
      for (auto& x : t.cdf) x = gamma_draw(config.concentration, rng);
      std::partial_sum(t.cdf.begin(), t.cdf.end(), t.cdf.begin());
      it = table.emplace(std::make_pair(a, b), std::move(t)).first;
    }
    if (uniform01(rng) < config.noise) return sample_cdf(unigram_cdf, uniform01(rng));
    return it->second.words[sample_cdf(it->second.cdf, uniform01(rng))];
  };

  std::vector<Document> docs;
  docs.reserve(config.documents);
  const std::size_t members = config.documents / 2;
  for (std::size_t d = 0; d < config.documents; ++d) {
    const auto length =
        config.min_words + uniform_index(rng, config.max_words - config.min_words);
    std::size_t a = kStart;
    std::size_t b = kStart;
    std::string text;
    for (std::size_t i = 0; i < length; ++i) {
      const auto w = next(a, b);
      if (i > 0) text += ' ';
      text += names[w];
      a = b;
      b = w;
    }
    docs.push_back(make_document("synth:" + std::to_string(d), std::move(text),
                                 d < members ? Label::member : Label::non_member));
  }
  return docs;
}

void write_corpus_jsonl(const std::vector<Document>& docs, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (const auto& d : docs) {
    nlohmann::json label = nullptr;
    if (d.label == Label::member) label = 1;
    if (d.label == Label::non_member) label = 0;
    out << nlohmann::json{{"id", d.id}, {"input", d.text}, {"label", label}}.dump() << '\n';
  }
  if (!out) throw DataError("cannot write " + path.string());
}

}  // namespace mia
