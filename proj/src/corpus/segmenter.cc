#include <algorithm>
#include <array>
#include <cctype>
#include <string>

#include "narrative/corpus.h"

namespace narrative {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_upper(char c) { return std::isupper(static_cast<unsigned char>(c)) != 0; }
bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }
bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }
bool is_opener(char c) { return c == '"' || c == '\'' || c == '(' || c == '['; }

constexpr std::array<std::string_view, 5> kAbbreviations = {"mr.", "mrs.", "dr.",
                                                             "e.g.", "i.e."};

// True when the period at `dot` closes one of the guarded abbreviations.
bool ends_abbreviation(std::string_view text, size_t floor, size_t dot) {
  size_t begin = dot;
  while (begin > floor && !is_space(text[begin - 1])) --begin;
  while (begin < dot && is_opener(text[begin])) ++begin;
  std::string word(text.substr(begin, dot - begin + 1));
  std::transform(word.begin(), word.end(), word.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), word) !=
         kAbbreviations.end();
}

std::string_view trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  size_t i = 0;
  const size_t n = text.size();
  auto is_punct = [](char c) {
    return std::ispunct(static_cast<unsigned char>(c)) != 0;
  };
  while (i < n) {
    while (i < n && is_space(text[i])) ++i;
    if (i >= n) break;
    size_t j = i;
    while (j < n && !is_space(text[j])) ++j;
    size_t b = i, e = j;
    while (b < e && is_punct(text[b])) tokens.emplace_back(1, text[b++]);
    size_t core_end = e;
    while (core_end > b && is_punct(text[core_end - 1])) --core_end;
    if (core_end > b) tokens.emplace_back(text.substr(b, core_end - b));
    for (size_t k = core_end; k < e; ++k) tokens.emplace_back(1, text[k]);
    i = j;
  }
  return tokens;
}

std::vector<Sentence> segment_sentences(std::string_view text) {
  std::vector<Sentence> out;
  auto emit = [&](std::string_view piece) {
    Sentence s;
    s.index = static_cast<int>(out.size());
    s.text = std::string(trim(piece));
    s.tokens = tokenize(s.text);
    out.push_back(std::move(s));
  };

  const size_t n = text.size();
  size_t start = 0;
  while (start < n && is_space(text[start])) ++start;
  if (start == n) {
    out.push_back(Sentence{});
    return out;
  }

  for (size_t i = start; i < n; ++i) {
    if (!is_terminal(text[i])) continue;
    size_t j = i;
    while (j < n && is_terminal(text[j])) ++j;
    while (j < n && is_closer(text[j])) ++j;
    if (j >= n) break;
    if (!is_space(text[j])) {
      i = j - 1;
      continue;
    }
    size_t k = j;
    while (k < n && is_space(text[k])) ++k;
    if (k >= n) break;
    char next = text[k];
    if (is_opener(next) && k + 1 < n) next = text[k + 1];
    if (!is_upper(next)) {
      i = j - 1;
      continue;
    }
    if (text[i] == '.' && j == i + 1 && ends_abbreviation(text, start, i)) continue;
    emit(text.substr(start, j - start));
    start = k;
    i = k - 1;
  }
  if (start < n) {
    std::string_view rest = trim(text.substr(start));
    if (!rest.empty()) emit(rest);
  }
  return out;
}

}  // namespace narrative
