#pragma once

#include "revrec/timestamp.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace revrec::corpus {

inline constexpr int kStoreFormatVersion = 1;
inline constexpr std::size_t kMinReviewTokens = 10;
inline constexpr std::size_t kMaxReviewTokens = 200;

struct AppDescriptor {
  std::string app_id;
  std::string name;
  std::string category;
  std::optional<std::string> repo;

  friend bool operator==(const AppDescriptor&, const AppDescriptor&) = default;
};

struct BugReport {
  std::string report_id;
  std::string app_id;
  std::string title;
  std::optional<std::string> body;
  Timestamp created_at;
  std::vector<std::string> labels;

  friend bool operator==(const BugReport&, const BugReport&) = default;
};

struct AppReview {
  std::string review_id;
  std::string app_id;
  std::string text;
  std::string cleaned;  // clean_for_embedding(text), derived at insertion
  Timestamp created_at;
  std::optional<int> rating;
  std::int64_t helpful_count = 0;

  friend bool operator==(const AppReview&, const AppReview&) = default;
};

/// Store ordering for reviews: helpful_count desc, created_at desc, review_id asc.
bool review_order_less(const AppReview& a, const AppReview& b);

/// Whether a cleaned review of `token_count` tokens passes the outlier gate.
constexpr bool review_length_admissible(std::size_t token_count) {
  return token_count >= kMinReviewTokens && token_count <= kMaxReviewTokens;
}

/// In-memory corpus. Built single-threaded, then shared read-only.
class CorpusStore {
 public:
  void register_app(AppDescriptor app);

  bool has_app(std::string_view app_id) const;
  const AppDescriptor& app(std::string_view app_id) const;
  const std::map<std::string, AppDescriptor, std::less<>>& apps() const { return apps_; }

  /// Reports of an app in insertion order; empty for apps without reports.
  const std::vector<BugReport>& reports(std::string_view app_id) const;
  /// Reviews of an app in store order (see review_order_less).
  const std::vector<AppReview>& reviews(std::string_view app_id) const;

  const BugReport* find_report(std::string_view app_id, std::string_view report_id) const;
  const AppReview* find_review(std::string_view app_id, std::string_view review_id) const;

  /// Returns false (and leaves the store unchanged) when (app_id, report_id)
  /// already exists. Throws UnknownApp for unregistered apps.
  bool add_report(BugReport report);

  /// Returns false when the review id or its cleaned text already exists for
  /// the app. No length gate is applied here; ingest_reviews applies it.
  bool add_review(AppReview review);

  /// Bulk form of add_review; re-sorts each touched app once. Returns the
  /// number of reviews accepted.
  std::size_t add_reviews(std::vector<AppReview> reviews);

  std::size_t report_count() const;
  std::size_t review_count() const;

  friend bool operator==(const CorpusStore& a, const CorpusStore& b);

 private:
  struct AppData {
    std::vector<BugReport> reports;
    std::vector<AppReview> reviews;
    std::unordered_map<std::string, std::size_t> report_index;
    std::unordered_map<std::string, std::size_t> review_index;
    std::unordered_set<std::string> review_texts;
  };

  const AppData* data(std::string_view app_id) const;
  AppData& data_for_insert(const std::string& app_id);

  std::map<std::string, AppDescriptor, std::less<>> apps_;
  std::map<std::string, AppData, std::less<>> data_;
};

struct IngestStats {
  std::size_t accepted = 0;
  std::size_t malformed = 0;        // unparseable or schema-violating lines
  std::size_t duplicates = 0;       // repeated ids or repeated normalized review text
  std::size_t length_rejected = 0;  // reviews outside the 10..200 token gate
  std::vector<std::string> warnings;  // "path:line: reason", one per malformed line
};

struct IngestOptions {
  /// Records dated after this instant are malformed. Defaults to the wall clock.
  std::optional<Timestamp> now;
};

/// Bug-report JSON Lines: {"id", "title", "body"?, "created_at", "labels"?}.
IngestStats ingest_reports(CorpusStore& store, const std::filesystem::path& path, std::string_view app_id,
                           const IngestOptions& options = {});

/// Review JSON Lines: {"id", "text", "created_at", "rating"?, "helpful_count"?}.
IngestStats ingest_reviews(CorpusStore& store, const std::filesystem::path& path, std::string_view app_id,
                           const IngestOptions& options = {});

/// Writes `dir/manifest.json`, `dir/reports.jsonl` and `dir/reviews.jsonl`.
void save_store(const CorpusStore& store, const std::filesystem::path& dir);

/// Loads a store written by save_store. Throws VersionMismatch for unknown
/// format versions and Io for unreadable, truncated or corrupt files; never
/// returns a partially loaded store.
CorpusStore load_store(const std::filesystem::path& dir);

}  // namespace revrec::corpus
