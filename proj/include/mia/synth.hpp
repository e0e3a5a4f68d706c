#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mia/textseg.hpp"

namespace mia {

/// Second-order Markov source over pronounceable pseudo-words.
///
/// Each (w[t-2], w[t-1]) history gets `successors` distinct next words drawn
/// from a Zipf(`zipf`) unigram law with Dirichlet(`concentration`) weights,
/// created lazily in generation order. With probability `noise` a word is
/// drawn from the unigram law instead.
struct SynthConfig {
  std::size_t vocab_size = 30;
  std::size_t successors = 30;
  double concentration = 1.0;
  double noise = 0.05;
  double zipf = 1.4;
  std::size_t min_words = 150;
  std::size_t max_words = 200;  // exclusive
  std::size_t documents = 400;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Word `index` of the pseudo-word alphabet ("baba", "babo", ...).
std::string pseudo_word(std::size_t index);

/// Generates `documents` texts; the first half are labelled members and the
/// rest non-members. Ids are "synth:<n>".
std::vector<Document> generate_corpus(const SynthConfig& config);

void write_corpus_jsonl(const std::vector<Document>& docs, const std::filesystem::path& path);

}  // namespace mia
