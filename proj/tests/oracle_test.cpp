#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mia/errors.hpp"
#include "mia/ngram_oracle.hpp"
#include "mia/synth.hpp"

namespace mia {
namespace {

std::vector<Document> tiny_corpus() {
  return {make_document("a", "the cat sat"), make_document("b", "the cat ran"),
          make_document("c", "a dog sat")};
}

TEST(Oracle, AddOneProbabilities) {
  const auto o = NGramOracle::train(tiny_corpus(), 2);
  // Vocabulary: a cat dog ran sat the + unknown.
  ASSERT_EQ(o.vocab_size(), 7u);
  const auto p = o.distribution("the");
  double total = 0.0;
  for (const auto& [w, x] : p) {
    total += x;
    if (w == "cat") {
      EXPECT_NEAR(x, 3.0 / 9.0, 1e-15);
    }
    if (w == "dog") {
      EXPECT_NEAR(x, 1.0 / 9.0, 1e-15);
    }
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  // Unseen history falls back to uniform.
  for (const auto& [w, x] : o.distribution("zebra")) EXPECT_NEAR(x, 1.0 / 7.0, 1e-15);
}

TEST(Oracle, CacheBlend) {
  const auto o = NGramOracle::train(tiny_corpus(), 2, 0.5, 1.0);
  const auto p = o.distribution("dog dog the");
  for (const auto& [w, x] : p) {
    if (w == "dog") {
      // Bigram part: (0 + 1) / (2 + 7); cache: (2 + 1) / (3 + 7).
      EXPECT_NEAR(x, 0.5 * (1.0 / 9.0) + 0.5 * (3.0 / 10.0), 1e-15);
    }
  }
}

TEST(Oracle, Validation) {
  EXPECT_THROW(NGramOracle::train(tiny_corpus(), 0), ConfigError);
  EXPECT_THROW(NGramOracle::train({}, 3), DataError);
  EXPECT_THROW(NGramOracle::train(tiny_corpus(), 3, 1.5), ConfigError);
}

TEST(Oracle, DigestTracksContent) {
  const auto a = NGramOracle::train(tiny_corpus(), 3);
  EXPECT_EQ(a.digest(), NGramOracle::train(tiny_corpus(), 3).digest());
  EXPECT_NE(a.digest(), NGramOracle::train(tiny_corpus(), 2).digest());
  EXPECT_NE(a.digest(), NGramOracle::train(tiny_corpus(), 3, 0.3).digest());
}

TEST(OracleBackend, DeterministicSampling) {
  auto oracle = std::make_shared<const NGramOracle>(NGramOracle::train(tiny_corpus(), 2));
  OracleBackend b(oracle);
  const auto x = b.sample_next_words("the", 50, 9);
  const auto y = b.sample_next_words("the", 50, 9);
  EXPECT_EQ(x.samples, y.samples);
  EXPECT_EQ(x.n_obtained, 50u);
  EXPECT_NE(x.samples, b.sample_next_words("the", 50, 10).samples);
  EXPECT_EQ(x.cost.requests, 1u);
}

TEST(OracleBackend, ContinuationsArePrefixStable) {
  auto oracle = std::make_shared<const NGramOracle>(NGramOracle::train(tiny_corpus(), 2));
  OracleBackend b(oracle);
  const auto short_run = b.generate_continuation("the", 3, 2, 4);
  const auto long_run = b.generate_continuation("the", 6, 2, 4);
  for (std::size_t j = 0; j < 2; ++j) {
    ASSERT_EQ(short_run.sequences[j].size(), 3u);
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_EQ(short_run.sequences[j][k], long_run.sequences[j][k]);
    }
  }
}

TEST(OracleBackend, LogprobsAndTemperature) {
  auto oracle = std::make_shared<const NGramOracle>(NGramOracle::train(tiny_corpus(), 2));
  OracleBackend b(oracle);
  EXPECT_NEAR(b.unit_logprob("the", "cat"), std::log(3.0 / 9.0), 1e-12);
  const auto top = b.top_candidates_with_logprobs("the", 2);
  ASSERT_EQ(top.candidates.size(), 2u);
  EXPECT_EQ(top.candidates[0].token, "cat");
  OracleBackend::Options cold;
  cold.temperature = 0.5;
  OracleBackend c(oracle, cold);
  const auto d = c.next_word_distribution("the");
  double total = 0.0;
  for (const auto& [w, x] : d) total += x;
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_GT(std::exp(c.unit_logprob("the", "cat")), 3.0 / 9.0);
}

TEST(Tiers, LowerTierRejects) {
  auto oracle = std::make_shared<const NGramOracle>(NGramOracle::train(tiny_corpus(), 2));
  OracleBackend::Options o;
  o.tier = CapabilityTier::text_only;
  OracleBackend b(oracle, o);
  EXPECT_THROW(b.tokenize_units("x"), UnsupportedCapability);
  EXPECT_THROW(b.unit_logprob("x", "y"), UnsupportedCapability);
  EXPECT_THROW(b.top_candidates_with_logprobs("x", 3), UnsupportedCapability);
  EXPECT_NO_THROW(b.sample_next_words("x", 2, 1));
}

TEST(ReplyParsing, FirstTokenStrippedAndFolded) {
  EXPECT_EQ(parse_next_word_reply("  \"Hello\" world"), "hello");
  EXPECT_EQ(parse_next_word_reply("“Paris”"), "paris");
  EXPECT_EQ(parse_next_word_reply("   "), std::string(kEmptySentinel));
  EXPECT_EQ(parse_next_word_reply("''"), std::string(kEmptySentinel));
  EXPECT_EQ(parse_next_word_reply(","), ",");
}

TEST(Synth, DeterministicCorpus) {
  SynthConfig c;
  c.documents = 10;
  const auto a = generate_corpus(c);
  const auto b = generate_corpus(c);
  ASSERT_EQ(a.size(), 10u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].text, b[i].text);
    EXPECT_EQ(a[i].label, i < 5 ? Label::member : Label::non_member);
    EXPECT_GE(a[i].length(), c.min_words);
    EXPECT_LT(a[i].length(), c.max_words);
  }
  c.seed = 2;
  EXPECT_NE(generate_corpus(c)[0].text, a[0].text);
  EXPECT_EQ(pseudo_word(0).size() % 2, 0u);
}

}  // namespace
}  // namespace mia
