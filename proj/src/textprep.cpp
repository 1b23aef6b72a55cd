#include "revrec/textprep.hpp"

#include "revrec/error.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "stopwords_data.hpp"

namespace revrec::textprep {

namespace {

bool is_ascii_letter(unsigned char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

const std::unordered_set<std::string>& stopword_set() {
  static const std::unordered_set<std::string> set(stopwords().begin(), stopwords().end());
  return set;
}

}  // namespace

const std::vector<std::string>& stopwords() {
  static const std::vector<std::string> words = [] {
    std::vector<std::string> out;
    std::istringstream in{std::string(detail::kStopwordsText)};
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line.front() == '#') continue;
      out.push_back(line);
    }
    return out;
  }();
  return words;
}

bool is_stopword(std::string_view token) { return stopword_set().contains(std::string(token)); }

std::vector<std::string> split_tokens(std::string_view cleaned) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < cleaned.size()) {
    while (i < cleaned.size() && cleaned[i] == ' ') ++i;
    const std::size_t start = i;
    while (i < cleaned.size() && cleaned[i] != ' ') ++i;
    if (i > start) out.emplace_back(cleaned.substr(start, i - start));
  }
  return out;
}

namespace {

// Character-level rules shared by both pipelines: lowercase letters, drop
// apostrophes, everything else becomes a space, letter runs capped at two.
std::string normalize_characters(std::string_view text) {
  std::string mapped;
  mapped.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_ascii_letter(c)) {
      mapped.push_back(static_cast<char>(c | 0x20));
    } else if (c == '\'') {
      continue;
    } else if (c == 0xE2 && i + 2 < text.size() && static_cast<unsigned char>(text[i + 1]) == 0x80 &&
               static_cast<unsigned char>(text[i + 2]) == 0x99) {
      i += 2;  // U+2019 right single quotation mark
    } else {
      mapped.push_back(' ');
    }
  }

  std::string collapsed;
  collapsed.reserve(mapped.size());
  for (char c : mapped) {
    const std::size_t n = collapsed.size();
    if (c != ' ' && n >= 2 && collapsed[n - 1] == c && collapsed[n - 2] == c) continue;
    collapsed.push_back(c);
  }
  return collapsed;
}

void analyze_into(std::string_view text, std::vector<std::string>& out, std::size_t* token_count) {
  const auto tokens = split_tokens(normalize_characters(text));
  if (token_count) *token_count += tokens.size();
  for (const auto& token : tokens) {
    if (is_stopword(token)) continue;
    std::string stem = porter_stem(token);
    if (stem.empty() || is_stopword(stem)) continue;
    out.push_back(std::move(stem));
  }
}

}  // namespace

CleanedText clean_for_embedding(std::string_view text) {
  const std::string collapsed = normalize_characters(text);
  CleanedText out;
  out.original = std::string(text);
  std::string_view previous;
  std::size_t i = 0;
  while (i < collapsed.size()) {
    while (i < collapsed.size() && collapsed[i] == ' ') ++i;
    const std::size_t start = i;
    while (i < collapsed.size() && collapsed[i] != ' ') ++i;
    if (i == start) break;
    const std::string_view token(collapsed.data() + start, i - start);
    if (token == previous) continue;
    if (!out.cleaned.empty()) out.cleaned.push_back(' ');
    out.cleaned.append(token);
    ++out.token_count;
    previous = token;
  }
  return out;
}

std::vector<std::string> clean_for_analysis(std::string_view text) {
  std::vector<std::string> out;
  analyze_into(text, out, nullptr);
  return out;
}

TokenStats count_terms(std::span<const std::string> docs) {
  TokenStats stats;
  std::vector<std::string> stems;
  for (const auto& doc : docs) {
    stems.clear();
    analyze_into(doc, stems, &stats.total_tokens);
    for (auto& stem : stems) ++stats.counts[std::move(stem)];
  }
  return stats;
}

WordSet WordSet::prefix(std::size_t n) const {
  n = std::min(n, words.size());
  WordSet out;
  out.words.assign(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(n));
  out.frequencies.assign(frequencies.begin(), frequencies.begin() + static_cast<std::ptrdiff_t>(n));
  out.k = n;
  return out;
}

WordSet ranked_terms(const TokenStats& stats) {
  std::vector<std::pair<std::string, std::size_t>> entries(stats.counts.begin(), stats.counts.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  WordSet out;
  out.words.reserve(entries.size());
  out.frequencies.reserve(entries.size());
  for (auto& [word, freq] : entries) {
    out.words.push_back(std::move(word));
    out.frequencies.push_back(freq);
  }
  out.k = out.words.size();
  return out;
}

WordSet top_k_frequent(std::span<const std::string> docs, std::size_t k) {
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "top_k_frequent requires k >= 1");
  if (docs.empty()) throw Error(ErrorCode::kEmptyCorpus, "top_k_frequent over an empty document list");
  WordSet out = ranked_terms(count_terms(docs)).prefix(k);
  out.k = k;
  return out;
}

WordSet frequent_above(std::span<const std::string> docs, std::size_t min_freq) {
  if (min_freq == 0) throw Error(ErrorCode::kInvalidArgument, "frequent_above requires min_freq >= 1");
  if (docs.empty()) throw Error(ErrorCode::kEmptyCorpus, "frequent_above over an empty document list");
  WordSet all = ranked_terms(count_terms(docs));
  const auto cut = std::find_if(all.frequencies.begin(), all.frequencies.end(),
                                [&](std::size_t f) { return f < min_freq; });
  return all.prefix(static_cast<std::size_t>(cut - all.frequencies.begin()));
}

SpellingCorrector::SpellingCorrector(std::span<const std::string> cleaned_docs) {
  for (const auto& doc : cleaned_docs) {
    for (auto& token : split_tokens(doc)) ++vocabulary_[std::move(token)];
  }
}

std::string SpellingCorrector::correct_token(const std::string& token) const {
  const auto self = vocabulary_.find(token);
  if (self == vocabulary_.end() || self->second != 1) return token;

  const std::string* best = nullptr;
  std::size_t best_freq = 1;
  auto consider = [&](const std::string& candidate) {
    const auto it = vocabulary_.find(candidate);
    if (it == vocabulary_.end() || it->second < 2) return;
    if (it->second > best_freq || (it->second == best_freq && best && it->first < *best)) {
      best = &it->first;
      best_freq = it->second;
    }
  };

  std::string candidate;
  for (std::size_t i = 0; i < token.size(); ++i) {  // deletions
    candidate = token;
    candidate.erase(i, 1);
    consider(candidate);
  }
  for (std::size_t i = 0; i < token.size(); ++i) {  // substitutions
    for (char c = 'a'; c <= 'z'; ++c) {
      if (c == token[i]) continue;
      candidate = token;
      candidate[i] = c;
      consider(candidate);
    }
  }
  for (std::size_t i = 0; i <= token.size(); ++i) {  // insertions
    for (char c = 'a'; c <= 'z'; ++c) {
      candidate = token;
      candidate.insert(candidate.begin() + static_cast<std::ptrdiff_t>(i), c);
      consider(candidate);
    }
  }
  return best ? *best : token;
}

std::string SpellingCorrector::correct(std::string_view cleaned) const {
  std::string out;
  for (const auto& token : split_tokens(cleaned)) {
    if (!out.empty()) out.push_back(' ');
    out += correct_token(token);
  }
  // Corrections can create new adjacent duplicates; re-normalize.
  return clean_for_embedding(out).cleaned;
}

}  // namespace revrec::textprep
