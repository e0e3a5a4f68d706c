#include "mia/textseg.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <array>
#include <stdexcept>

namespace mia {
namespace {

struct CodePoint {
  UChar32 value;
  std::size_t begin;
  std::size_t end;
};

std::vector<CodePoint> decode(std::string_view text) {
  std::vector<CodePoint> out;
  out.reserve(text.size());
  const auto* bytes = reinterpret_cast<const uint8_t*>(text.data());
  const auto length = static_cast<int32_t>(text.size());
  int32_t offset = 0;
  while (offset < length) {
    const int32_t start = offset;
    UChar32 c;
    U8_NEXT(bytes, offset, length, c);
    // Ill-formed sequences decode to U+FFFD and stay attached to their bytes.
    out.push_back({c < 0 ? 0xFFFD : c, static_cast<std::size_t>(start),
                   static_cast<std::size_t>(offset)});
  }
  return out;
}

bool is_space(UChar32 c) { return u_isUWhiteSpace(c) != 0; }

bool is_mark(UChar32 c) {
  const auto type = u_charType(c);
  return type == U_NON_SPACING_MARK || type == U_COMBINING_SPACING_MARK ||
         type == U_ENCLOSING_MARK;
}

bool is_wordchar(UChar32 c) { return u_isalnum(c) != 0 || is_mark(c); }
bool is_digit(UChar32 c) { return c >= '0' && c <= '9'; }
bool is_apostrophe(UChar32 c) { return c == '\'' || c == 0x2019; }
bool is_letter(UChar32 c) { return u_isalpha(c) != 0; }

UChar32 lower_ascii(UChar32 c) { return (c >= 'A' && c <= 'Z') ? c + 32 : c; }

// Length of the alphabetic run starting at `from` within [from, end).
std::size_t alpha_run(const std::vector<CodePoint>& cps, std::size_t from, std::size_t end) {
  std::size_t i = from;
  while (i < end && (is_letter(cps[i].value) || is_mark(cps[i].value))) ++i;
  return i - from;
}

bool is_clitic_suffix(const std::vector<CodePoint>& cps, std::size_t from, std::size_t n) {
  static constexpr std::array<std::u32string_view, 6> kClitics = {U"s", U"m", U"d",
                                                                  U"ll", U"re", U"ve"};
  for (auto clitic : kClitics) {
    if (clitic.size() != n) continue;
    bool match = true;
    for (std::size_t k = 0; k < n && match; ++k) {
      match = lower_ascii(cps[from + k].value) == static_cast<UChar32>(clitic[k]);
    }
    if (match) return true;
  }
  return false;
}

class ChunkSplitter {
 public:
  ChunkSplitter(std::string_view text, const std::vector<CodePoint>& cps, std::vector<Word>& out)
      : text_(text), cps_(cps), out_(out) {}

  // Splits cps[begin, end), a whitespace-free chunk.
  void split(std::size_t begin, std::size_t end) {
    std::size_t i = begin;
    while (i < end) {
      const UChar32 c = cps_[i].value;
      if (is_wordchar(c) || (is_sign(c) && i + 1 < end && is_digit(cps_[i + 1].value) &&
                             (i == begin || !is_wordchar(cps_[i - 1].value)))) {
        i = word(i, end);
      } else if (is_apostrophe(c) && i + 1 < end && is_letter(cps_[i + 1].value) &&
                 i > begin && is_wordchar(cps_[i - 1].value)) {
        // Clitic left over after a split, e.g. the "'s" of "it's".
        const std::size_t n = alpha_run(cps_, i + 1, end);
        emit(i, i + 1 + n);
        i += 1 + n;
      } else {
        i = punctuation(i, end);
      }
    }
  }

 private:
  static bool is_sign(UChar32 c) { return c == '-' || c == '+'; }

  std::size_t punctuation(std::size_t i, std::size_t end) {
    const UChar32 c = cps_[i].value;
    std::size_t j = i + 1;
    if (c == '.' || c == '-') {
      while (j < end && cps_[j].value == c) ++j;
    }
    while (j < end && is_mark(cps_[j].value)) ++j;
    emit(i, j);
    return j;
  }

  // Consumes a word starting at cps[i] and returns the index past it.
  std::size_t word(std::size_t i, std::size_t end) {
    const std::size_t start = i;
    if (is_sign(cps_[i].value)) ++i;
    while (i < end) {
      const UChar32 c = cps_[i].value;
      if (is_wordchar(c)) {
        ++i;
        continue;
      }
      const bool has_next = i + 1 < end;
      const UChar32 prev = cps_[i - 1].value;
      const UChar32 next = has_next ? cps_[i + 1].value : 0;
      if ((c == '.' || c == ',') && is_digit(prev) && has_next && is_digit(next)) {
        ++i;
      } else if (c == '.' && is_letter(prev) && has_next && is_letter(next)) {
        ++i;  // abbreviations such as "U.S"
      } else if (c == '-' && is_wordchar(prev) && has_next && is_wordchar(next)) {
        ++i;
      } else if (is_apostrophe(c) && has_next && is_letter(next)) {
        const std::size_t n = alpha_run(cps_, i + 1, end);
        if (n == 1 && lower_ascii(next) == 't' && i - 1 > start &&
            lower_ascii(prev) == 'n') {
          emit(start, i - 1);  // "don't" -> "do" "n't"
          emit(i - 1, i + 2);
          return i + 2;
        }
        if (is_clitic_suffix(cps_, i + 1, n)) {
          emit(start, i);
          return i;
        }
        ++i;  // internal apostrophe, e.g. "O'Neill"
      } else {
        break;
      }
    }
    // Keep the closing period of dotted abbreviations ("U.S.").
    if (i < end && cps_[i].value == '.' && ends_dotted_abbreviation(start, i) &&
        (i + 1 == end || cps_[i + 1].value != '.')) {
      ++i;
    }
    emit(start, i);
    return i;
  }

  bool ends_dotted_abbreviation(std::size_t start, std::size_t stop) const {
    // Pattern: letter (. letter)+ where every letter run has length one.
    if (stop - start < 3) return false;
    for (std::size_t k = start; k < stop; ++k) {
      const bool even = (k - start) % 2 == 0;
      if (even ? !is_letter(cps_[k].value) : cps_[k].value != '.') return false;
    }
    return (stop - start) % 2 == 1;
  }

  void emit(std::size_t first, std::size_t last) {
    if (first >= last) return;
    Word w;
    w.span = {cps_[first].begin, cps_[last - 1].end};
    w.surface = std::string(text_.substr(w.span.begin, w.span.size()));
    w.folded = fold(w.surface);
    w.is_numeric = is_numeric_word(w.folded);
    out_.push_back(std::move(w));
  }

  std::string_view text_;
  const std::vector<CodePoint>& cps_;
  std::vector<Word>& out_;
};

const icu::Normalizer2& nfc() {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status) || norm == nullptr) {
    throw std::runtime_error("ICU NFC normalizer unavailable");
  }
  return *norm;
}

}  // namespace

const char* to_string(Label label) {
  switch (label) {
    case Label::member:
      return "member";
    case Label::non_member:
      return "non_member";
    case Label::unknown:
      break;
  }
  return "unknown";
}

Label label_from_string(std::string_view name) {
  if (name == "member") return Label::member;
  if (name == "non_member") return Label::non_member;
  return Label::unknown;
}

std::string fold(std::string_view text) {
  if (std::all_of(text.begin(), text.end(), [](char c) { return (c & 0x80) == 0; })) {
    std::string out(text);
    for (auto& c : out) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
    }
    return out;
  }
  const auto& norm = nfc();
  UErrorCode status = U_ZERO_ERROR;
  icu::UnicodeString s = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  s = norm.normalize(s, status);
  s.foldCase();
  s = norm.normalize(s, status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU normalization failed");
  std::string out;
  s.toUTF8String(out);
  return out;
}

bool is_numeric_word(std::string_view s) {
  std::size_t i = 0;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) ++i;
  const auto digit = [&](std::size_t k) { return k < s.size() && s[k] >= '0' && s[k] <= '9'; };

  const std::size_t int_begin = i;
  while (digit(i)) ++i;
  const std::size_t lead = i - int_begin;
  if (lead == 0) return false;
  if (i < s.size() && s[i] == ',') {
    if (lead > 3) return false;
    while (i < s.size() && s[i] == ',') {
      if (!(digit(i + 1) && digit(i + 2) && digit(i + 3))) return false;
      i += 4;
      if (digit(i)) return false;
    }
  }
  if (i < s.size() && s[i] == '.') {
    ++i;
    if (!digit(i)) return false;
    while (digit(i)) ++i;
  }
  return i == s.size();
}

std::vector<Word> tokenize_words(std::string_view text) {
  const auto cps = decode(text);
  std::vector<Word> words;
  ChunkSplitter splitter(text, cps, words);
  std::size_t i = 0;
  while (i < cps.size()) {
    while (i < cps.size() && is_space(cps[i].value)) ++i;
    std::size_t j = i;
    while (j < cps.size() && !is_space(cps[j].value)) ++j;
    if (j > i) splitter.split(i, j);
    i = j;
  }
  return words;
}

Document make_document(std::string id, std::string text, Label label) {
  Document doc;
  doc.id = std::move(id);
  doc.text = std::move(text);
  doc.words = tokenize_words(doc.text);
  doc.label = label;
  return doc;
}

std::string prefix_of(const Document& doc, std::size_t index) {
  if (index < 1 || index > doc.words.size()) {
    throw std::out_of_range("word index " + std::to_string(index) + " outside 1.." +
                            std::to_string(doc.words.size()));
  }
  return doc.text.substr(0, doc.words[index - 1].span.begin);
}

std::string join_shots(std::span<const Document> shots, std::string_view prefix,
                       std::string_view delimiter) {
  std::string out;
  for (const auto& shot : shots) {
    out += shot.text;
    out += delimiter;
  }
  out += prefix;
  return out;
}

std::size_t count_whitespace_tokens(std::string_view text) {
  std::size_t count = 0;
  bool in_token = false;
  for (const auto& cp : decode(text)) {
    const bool space = is_space(cp.value);
    if (!space && !in_token) ++count;
    in_token = !space;
  }
  return count;
}

std::optional<std::size_t> whitespace_token_end(std::string_view text, std::size_t k) {
  if (k == 0) return 0;
  std::size_t count = 0;
  bool in_token = false;
  const auto cps = decode(text);
  for (std::size_t i = 0; i < cps.size(); ++i) {
    const bool space = is_space(cps[i].value);
    if (!space && !in_token) ++count;
    in_token = !space;
    if (count == k && in_token && (i + 1 == cps.size() || is_space(cps[i + 1].value))) {
      return cps[i].end;
    }
  }
  return std::nullopt;
}

}  // namespace mia
