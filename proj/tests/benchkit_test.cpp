#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "mia/benchkit.hpp"
#include "mia/errors.hpp"

namespace mia {
namespace {

std::string corpus_jsonl(int members, int non_members) {
  std::string out;
  for (int i = 0; i < members + non_members; ++i) {
    const bool member = i < members;
    out += R"({"input": "doc )" + std::to_string(i) + R"( alpha beta gamma delta word)" +
           std::to_string(i % 5) + R"(", "label": )" + (member ? "1" : "0") + "}\n";
  }
  return out;
}

TEST(Jsonl, LabelsAndIds) {
  const auto b = parse_jsonl(
      "{\"input\": \"a b\", \"label\": 1}\n"
      "\n"
      "{\"input\": \"c d\", \"label\": false, \"id\": \"custom\"}\n"
      "{\"input\": \"e f\", \"label\": \"member\"}\n"
      "{\"input\": \"g h\"}\n",
      "set");
  ASSERT_EQ(b.documents.size(), 4u);
  EXPECT_EQ(b.documents[0].label, Label::member);
  EXPECT_EQ(b.documents[0].id, "set:1");
  EXPECT_EQ(b.documents[1].label, Label::non_member);
  EXPECT_EQ(b.documents[1].id, "custom");
  EXPECT_EQ(b.documents[2].label, Label::member);
  EXPECT_EQ(b.documents[3].label, Label::unknown);
  EXPECT_EQ(b.count(Label::member), 2u);
}

TEST(Jsonl, ErrorsNameTheLine) {
  try {
    parse_jsonl("{\"input\": \"a\", \"label\": 1}\n{broken\n", "set");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_jsonl("{\"text\": \"a\"}\n", "set"), DataError);
  EXPECT_THROW(parse_jsonl("", "set"), DataError);
  JsonlFields f;
  f.text = "text";
  EXPECT_EQ(parse_jsonl("{\"text\": \"a b\", \"label\": 0}\n", "set", f).documents.size(), 1u);
}

TEST(Pool, DeterministicAndDisjoint) {
  auto a = parse_jsonl(corpus_jsonl(20, 20), "c");
  auto b = parse_jsonl(corpus_jsonl(20, 20), "c");
  reserve_prefix_pool(a, 10, 7);
  reserve_prefix_pool(b, 10, 7);
  ASSERT_EQ(a.prefix_pool.size(), 10u);
  EXPECT_EQ(a.documents.size(), 30u);
  std::set<std::string> eval_ids;
  for (const auto& d : a.documents) eval_ids.insert(d.id);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(a.prefix_pool[i].id, b.prefix_pool[i].id);
    EXPECT_EQ(a.prefix_pool[i].label, Label::non_member);
    EXPECT_EQ(eval_ids.count(a.prefix_pool[i].id), 0u);
  }
  EXPECT_EQ(benchmark_digest(a), benchmark_digest(b));
  auto c = parse_jsonl(corpus_jsonl(20, 20), "c");
  reserve_prefix_pool(c, 10, 8);
  EXPECT_NE(benchmark_digest(a), benchmark_digest(c));
  auto d = parse_jsonl(corpus_jsonl(20, 3), "c");
  EXPECT_THROW(reserve_prefix_pool(d, 10, 1), DataError);
}

TEST(Bucket, TruncatesAndSkips) {
  auto b = parse_jsonl(
      "{\"input\": \"one two three four five\", \"label\": 1}\n"
      "{\"input\": \"short text\", \"label\": 0}\n",
      "set");
  apply_length_bucket(b, 3);
  ASSERT_EQ(b.documents.size(), 1u);
  EXPECT_EQ(b.documents[0].text, "one two three");
  EXPECT_EQ(b.documents[0].length(), 3u);
  EXPECT_EQ(b.skipped_short, 1u);
  EXPECT_EQ(b.length_bucket, std::optional<std::size_t>(3));
}

TEST(Tfidf, IdfAndSimilarity) {
  const auto a = make_document("a", "apple banana apple");
  const auto b = make_document("b", "apple cherry");
  const auto c = make_document("c", "durian");
  const std::vector<const Document*> docs{&a, &b, &c};
  const TfidfIndex index(docs);
  EXPECT_NEAR(index.idf("apple"), std::log(4.0 / 3.0) + 1.0, 1e-15);
  EXPECT_NEAR(index.idf("durian"), std::log(4.0 / 2.0) + 1.0, 1e-15);
  EXPECT_NEAR(index.similarity(a, a), 1.0, 1e-12);
  EXPECT_EQ(index.similarity(a, c), 0.0);
  EXPECT_GT(index.similarity(a, b), 0.0);
  EXPECT_EQ(index.similarity(a, make_document("e", "")), 0.0);
}

TEST(Shots, FixedRandomAndTfidf) {
  auto bench = parse_jsonl(corpus_jsonl(10, 19), "c");
  reserve_prefix_pool(bench, 9, 3);
  const auto& doc = bench.documents.front();

  ShotSelection fixed{ShotStrategy::fixed, 4, 0};
  const auto f = select_shots(bench, doc, fixed);
  ASSERT_EQ(f.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(f[i].id, bench.prefix_pool[i].id);

  ShotSelection random{ShotStrategy::random, 4, 11};
  const auto r1 = select_shots(bench, doc, random);
  const auto r2 = select_shots(bench, doc, random);
  ASSERT_EQ(r1.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(r1[i].id, r2[i].id);

  const auto index = TfidfIndex::over(bench);
  ShotSelection most{ShotStrategy::tfidf_most, 3, 0};
  ShotSelection least{ShotStrategy::tfidf_least, 3, 0};
  const auto m = select_shots(bench, doc, most, &index);
  const auto l = select_shots(bench, doc, least, &index);
  ASSERT_EQ(m.size(), 3u);
  ASSERT_EQ(l.size(), 3u);
  double sm = 0, sl = 0;
  for (const auto& d : m) sm += index.similarity(doc, d);
  for (const auto& d : l) sl += index.similarity(doc, d);
  EXPECT_GE(sm, sl);

  ShotSelection too_many{ShotStrategy::fixed, 10, 0};
  EXPECT_THROW(select_shots(bench, doc, too_many), ConfigError);
  EXPECT_THROW(select_shots(bench, bench.prefix_pool[0], fixed), DataError);
  EXPECT_TRUE(select_shots(bench, doc, ShotSelection{ShotStrategy::fixed, 0, 0}).empty());
}

TEST(Prepared, RoundTrip) {
  auto bench = parse_jsonl(corpus_jsonl(6, 8), "c");
  apply_length_bucket(bench, 4);
  reserve_prefix_pool(bench, 3, 5);
  const auto dir = std::filesystem::temp_directory_path() / "mia_prepared_test";
  std::filesystem::remove_all(dir);
  write_prepared(bench, dir);
  const auto back = load_prepared(dir);
  EXPECT_EQ(benchmark_digest(back), benchmark_digest(bench));
  EXPECT_EQ(back.documents.size(), bench.documents.size());
  EXPECT_EQ(back.prefix_pool.size(), 3u);
  EXPECT_EQ(back.length_bucket, bench.length_bucket);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace mia
