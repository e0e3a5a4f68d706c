#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "mia/errors.hpp"
#include "mia/scoring.hpp"

namespace mia {
namespace {

Word word(std::string_view s) { return tokenize_words(s).at(0); }

SampleBatch batch_of(std::vector<std::string> words) {
  return make_batch("ctx", words, static_cast<std::uint32_t>(words.size()), 1, "test");
}

TEST(Smoothing, Grid) {
  for (double alpha : {0.5, 1.0, 2.0}) {
    for (std::uint32_t n = 1; n <= 50; ++n) {
      for (std::uint32_t c = 0; c <= n; ++c) {
        const double s = smoothed_match_rate(c, n, alpha);
        EXPECT_EQ(s, (c + alpha) / (n + 2 * alpha));
        EXPECT_GT(s, 0.0);
        EXPECT_LT(s, 1.0);
      }
    }
  }
  EXPECT_THROW(SmoothingConfig{0.0}.validate(), ConfigError);
}

TEST(Empirical, CountsFoldedMatches) {
  const auto s = empirical_score(word("The"), batch_of({"the", "cat", "the", "a"}), {1.0});
  EXPECT_EQ(s.value, (2 + 1.0) / (4 + 2.0));
  EXPECT_EQ(s.kind, ScoreKind::empirical);
  EXPECT_EQ(s.n_effective, 4u);
}

TEST(Empirical, MonotoneInMatches) {
  std::vector<std::string> words(10, "x");
  double last = 0.0;
  for (int k = 0; k <= 10; ++k) {
    const double v = empirical_score(word("y"), batch_of(words), {1.0}).value;
    EXPECT_GT(v, last);
    last = v;
    if (k < 10) words[k] = "y";
  }
}

EmbeddingTable compass() {
  EmbeddingTable t;
  t.insert("east", Eigen::Vector2d(1, 0));
  t.insert("north", Eigen::Vector2d(0, 1));
  t.insert("west", Eigen::Vector2d(-1, 0));
  return t;
}

TEST(Semantic, MeanSimilarityWithSentinelZero) {
  const auto t = compass();
  const auto s = semantic_score(word("east"),
                                batch_of({"east", "north", "west", std::string(kEmptySentinel)}),
                                t, false);
  EXPECT_NEAR(s.value, (1.0 + 0.5 + 0.0 + 0.0) / 4.0, 1e-15);
  EXPECT_EQ(s.kind, ScoreKind::semantic);
}

TEST(Semantic, NumericExactOverride) {
  EmbeddingTable t;
  t.insert("3", Eigen::Vector2d(1, 0));
  t.insert("4", Eigen::Vector2d(1, 0.01));
  const auto b = batch_of({"3", "4"});
  EXPECT_NEAR(semantic_score(word("3"), b, t, true).value, 0.5, 1e-15);
  EXPECT_GT(semantic_score(word("3"), b, t, false).value, 0.99);
}

TEST(Weighted, SoftmaxOverLogprobs) {
  const auto t = compass();
  const std::vector<Candidate> c{{"east", std::log(0.3)}, {"north", std::log(0.1)}};
  const auto s = weighted_semantic_score(word("east"), c, t);
  EXPECT_NEAR(s.value, 0.75 * 1.0 + 0.25 * 0.5, 1e-12);
  EXPECT_EQ(s.kind, ScoreKind::weighted);
}

TEST(Weighted, MergesFoldedDuplicatesByMax) {
  const auto t = compass();
  const std::vector<Candidate> c{
      {"East", std::log(0.2)}, {"east", std::log(0.4)}, {"west", std::log(0.4)}};
  EXPECT_NEAR(weighted_semantic_score(word("east"), c, t).value, 0.5, 1e-12);
}

TEST(Weighted, RejectsDegenerateInput) {
  const auto t = compass();
  EXPECT_THROW(weighted_semantic_score(word("east"), {}, t), DataError);
  const std::vector<Candidate> bad{{"east", std::nan("")}};
  EXPECT_THROW(weighted_semantic_score(word("east"), bad, t), DataError);
  const std::vector<Candidate> inf{{"east", -INFINITY}};
  EXPECT_THROW(weighted_semantic_score(word("east"), inf, t), DataError);
}

TEST(Exact, ExpectedValues) {
  const auto t = compass();
  const Distribution d{{"east", 0.5}, {"north", 0.25}, {"west", 0.25}};
  EXPECT_NEAR(exact_expected_semantic(word("east"), d, t), 0.5 + 0.125, 1e-15);
  EXPECT_NEAR(exact_expected_empirical(word("east"), d, 100, {1.0}), (50.0 + 1.0) / 102.0, 1e-15);
  EXPECT_THROW(check_distribution({{"a", 0.5}}), DataError);
}

// Sampled semantic scores stay in range and equal the exact expectation of
// their own empirical distribution.
TEST(SemanticProperties, MatchesEmpiricalExpectation) {
  const auto t = compass();
  std::mt19937_64 rng(5);
  const std::vector<std::string> vocab{"east", "north", "west", "south",
                                       std::string(kEmptySentinel)};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> words;
    const auto n = 1 + rng() % 30;
    for (std::size_t i = 0; i < n; ++i) words.push_back(vocab[rng() % vocab.size()]);
    const auto b = batch_of(words);
    Distribution d;
    for (const auto& [w, c] : b.samples) d.emplace_back(w, static_cast<double>(c) / n);
    const auto s = semantic_score(word("north"), b, t, false).value;
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
    EXPECT_NEAR(s, exact_expected_semantic(word("north"), d, t), 1e-12);
  }
}

}  // namespace
}  // namespace mia
