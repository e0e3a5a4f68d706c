#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mia {

/// Half-open byte range into a UTF-8 source string.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const Span&) const = default;
};

struct Word {
  std::string surface;  // exact slice of the source text
  std::string folded;   // case-folded NFC form, used for matching and lookup
  Span span;
  bool is_numeric = false;
};

enum class Label { member, non_member, unknown };

const char* to_string(Label label);
Label label_from_string(std::string_view name);

struct Document {
  std::string id;
  std::string text;
  std::vector<Word> words;
  Label label = Label::unknown;
  std::map<std::string, std::string> meta;

  std::size_t length() const { return words.size(); }
};

/// Case fold followed by canonical composition. Idempotent.
std::string fold(std::string_view text);

/// Optional sign, ASCII digits (plain or grouped by commas in threes), and an
/// optional single decimal point followed by digits.
bool is_numeric_word(std::string_view folded);

/// Treebank-style word segmentation that keeps byte spans into `text`.
///
/// Trailing and leading punctuation is split off, clitics are split at the
/// apostrophe ("it's" -> "it" "'s", with "n't" kept whole as in the Treebank
/// convention), and periods or commas between digits stay inside numbers.
/// Whitespace never appears inside a word. Empty input yields no words.
std::vector<Word> tokenize_words(std::string_view text);

/// Builds a document and tokenizes its text eagerly.
Document make_document(std::string id, std::string text, Label label = Label::unknown);

/// Text preceding word `index` (1-based), trailing whitespace included.
/// Throws std::out_of_range unless 1 <= index <= doc.length().
std::string prefix_of(const Document& doc, std::size_t index);

/// shots[0].text + delimiter + ... + shots[T-1].text + delimiter + prefix.
std::string join_shots(std::span<const Document> shots, std::string_view prefix,
                       std::string_view delimiter);

/// Whitespace-delimited token count, as used for length buckets.
std::size_t count_whitespace_tokens(std::string_view text);

/// Byte offset just past the k-th (1-based) whitespace-delimited token, or
/// nullopt when the text has fewer than k tokens.
std::optional<std::size_t> whitespace_token_end(std::string_view text, std::size_t k);

}  // namespace mia
