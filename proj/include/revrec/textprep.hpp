#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace revrec::textprep {

struct CleanedText {
  std::string original;
  std::string cleaned;
  std::size_t token_count = 0;
};

/// Light normalization applied before embedding.
///
/// Lowercases ASCII letters, deletes apostrophes (ASCII and U+2019) so that
/// contractions stay one token, and turns every other non-letter byte
/// (punctuation, digits, emoticons, any non-ASCII codepoint) into a space.
/// Runs of three or more identical letters shrink to two, consecutive
/// duplicate tokens collapse to one, and whitespace is normalized to single
/// spaces. The result is a fixed point of this function.
CleanedText clean_for_embedding(std::string_view text);

/// Aggressive normalization for frequent-word analysis: the character rules
/// of clean_for_embedding (repeated tokens are kept, since they are counted),
/// stopword removal, Porter stemming. Tokens whose stem is itself a stopword
/// ("doing" -> "do") are dropped as well.
std::vector<std::string> clean_for_analysis(std::string_view text);

std::vector<std::string> split_tokens(std::string_view cleaned);

bool is_stopword(std::string_view token);
const std::vector<std::string>& stopwords();

/// Porter (1980) suffix-stripping stemmer. Input must be lowercase ASCII
/// letters; words of length <= 2 are returned unchanged.
std::string porter_stem(std::string_view word);

struct TokenStats {
  std::unordered_map<std::string, std::size_t> counts;
  std::size_t total_tokens = 0;  // cleaned tokens seen, before stopword removal
};

TokenStats count_terms(std::span<const std::string> docs);

/// Frequency-ordered word list (frequency descending, then lexicographic).
struct WordSet {
  std::vector<std::string> words;
  std::vector<std::size_t> frequencies;  // parallel to words
  std::size_t k = 0;                     // requested size

  std::size_t size() const noexcept { return words.size(); }
  bool empty() const noexcept { return words.empty(); }

  /// First n entries (n clamped to size()).
  WordSet prefix(std::size_t n) const;

  friend bool operator==(const WordSet&, const WordSet&) = default;
};

/// All terms of `stats` in frequency order.
WordSet ranked_terms(const TokenStats& stats);

WordSet top_k_frequent(std::span<const std::string> docs, std::size_t k);
WordSet frequent_above(std::span<const std::string> docs, std::size_t min_freq);

/// Optional dictionary pass: tokens seen exactly once in the corpus are
/// replaced by their most frequent edit-distance-1 neighbour (ties broken
/// lexicographically) when one exists with frequency >= 2.
class SpellingCorrector {
 public:
  explicit SpellingCorrector(std::span<const std::string> cleaned_docs);

  std::string correct(std::string_view cleaned) const;

 private:
  std::string correct_token(const std::string& token) const;

  std::unordered_map<std::string, std::size_t> vocabulary_;
};

}  // namespace revrec::textprep
