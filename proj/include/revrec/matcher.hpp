#pragma once

#include "revrec/corpus.hpp"
#include "revrec/embedding.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace revrec::matcher {

/// Row-major block of unit vectors with their stored norms. Rows whose text
/// could not be embedded are zero-filled and marked absent.
class VectorBlock {
 public:
  VectorBlock() = default;
  explicit VectorBlock(std::size_t dim) : dim_(dim) {}

  void append(std::span<const float> row);
  void append_absent();

  std::size_t dim() const noexcept { return dim_; }
  std::size_t rows() const noexcept { return present_.size(); }
  bool present(std::size_t row) const { return present_[row]; }
  std::span<const float> row(std::size_t r) const { return {data_.data() + r * dim_, dim_}; }
  /// sqrt(dot(row, row)) as computed by embedding::cosine.
  double norm(std::size_t r) const { return norms_[r]; }

 private:
  std::size_t dim_ = 0;
  std::vector<float> data_;
  std::vector<double> norms_;
  std::vector<bool> present_;
};

struct TableBuildOptions {
  /// Apply the edit-distance-1 spelling pass to review texts (per app vocabulary).
  bool spell_correct = false;
};

/// Embeddings for every review and report title of a store, aligned with the
/// store's per-app ordering. Read-only after construction.
class EmbeddingTable {
 public:
  static EmbeddingTable build(const corpus::CorpusStore& store, embedding::Embedder& embedder,
                              embedding::EmbeddingCache* cache = nullptr, const TableBuildOptions& options = {});

  std::size_t dim() const noexcept { return dim_; }
  const VectorBlock& reviews(std::string_view app_id) const;
  const VectorBlock& reports(std::string_view app_id) const;

  /// Title vector of a stored report; nullopt when the report is unknown or
  /// its title cleans to zero tokens.
  std::optional<std::span<const float>> title_vector(std::string_view app_id, std::string_view report_id) const;

  std::size_t unembeddable_titles() const noexcept { return unembeddable_titles_; }
  std::size_t unembeddable_reviews() const noexcept { return unembeddable_reviews_; }

 private:
  const corpus::CorpusStore* store_ = nullptr;
  std::size_t dim_ = 0;
  std::map<std::string, VectorBlock, std::less<>> reviews_;
  std::map<std::string, VectorBlock, std::less<>> reports_;
  std::size_t unembeddable_titles_ = 0;
  std::size_t unembeddable_reviews_ = 0;
};

struct MatchConfig {
  double recommend_threshold = 0.9;
  double ground_truth_threshold = 0.91;
  double duplicate_threshold = 0.91;
  std::size_t top_n = 3;

  /// Enforces thresholds in (0, 1] and top_n >= 1. Library operations accept
  /// thresholds above 1 (an unsatisfiable gate); front ends call this.
  void validate() const;
};

struct ScanOptions {
  std::size_t threads = 1;
};

struct ReviewMatch {
  std::string review_id;
  double similarity = 0.0;
  std::size_t rank = 0;

  friend bool operator==(const ReviewMatch&, const ReviewMatch&) = default;
};

struct DuplicateHit {
  std::string report_id;
  double similarity = 0.0;

  friend bool operator==(const DuplicateHit&, const DuplicateHit&) = default;
};

struct Recommendation {
  std::string source_app;
  std::string source_report;
  std::string target_app;
  std::vector<ReviewMatch> matches;
  bool decided = false;
  std::optional<DuplicateHit> duplicate_of;

  friend bool operator==(const Recommendation&, const Recommendation&) = default;
};

struct ReportRef {
  std::string app_id;
  std::string report_id;

  friend bool operator==(const ReportRef&, const ReportRef&) = default;
  friend auto operator<=>(const ReportRef&, const ReportRef&) = default;
};

struct GroundTruthPair {
  ReportRef report_a;
  ReportRef report_b;
  double pair_similarity = 0.0;
  std::optional<std::size_t> hit_rank;

  friend bool operator==(const GroundTruthPair&, const GroundTruthPair&) = default;
};

struct GroundTruthResult {
  std::vector<GroundTruthPair> pairs;
  std::size_t skipped = 0;  // A-reports whose titles could not be embedded
};

/// Ranking compares similarities on a 1e-12 grid. Cosines that are equal in
/// exact arithmetic can come out of the double pipeline an ulp apart; on the
/// grid they tie and the caller's tie-break decides.
inline std::int64_t similarity_key(double similarity) {
  return static_cast<std::int64_t>(std::floor(similarity * 1e12 + 0.5));
}

/// Candidate produced by the exact scan: similarity and row in the block.
struct ScanHit {
  double similarity;
  std::size_t row;
  std::int64_t key = similarity_key(similarity);
};

/// Exact top-n scan of `block` against a query. The similarity of each row
/// is embedding::cosine(query, row), bit for bit; rows are ordered by
/// similarity_key, then `tie_break`.
///
/// Rows that are absent, rejected by `keep`, or below `threshold` are
/// skipped. `tie_break(a, b)` (a ranks ahead of b) must be a strict total order on rows with equal
/// similarity. The scan splits rows into contiguous chunks (one per thread),
/// keeps a bounded heap per chunk and merges them; each similarity is
/// computed by the same dot kernel whatever the chunking, so the result is
/// identical for every thread count.
std::vector<ScanHit> scan_top_n(std::span<const float> query, const VectorBlock& block, double threshold,
                                std::size_t top_n, const std::function<bool(std::size_t)>& keep,
                                const std::function<bool(std::size_t, std::size_t)>& tie_break,
                                const ScanOptions& options = {});

/// Reviews created strictly before `cutoff`, order preserved.
std::vector<corpus::AppReview> temporal_review_filter(std::span<const corpus::AppReview> reviews, Timestamp cutoff);

class Matcher {
 public:
  Matcher(const corpus::CorpusStore& store, const EmbeddingTable& table, MatchConfig config, ScanOptions scan = {});

  const MatchConfig& config() const noexcept { return config_; }

  /// Reviews of `target_app` most similar to the report title: similarity
  /// desc, created_at desc, review_id asc; at most top_n entries, none below
  /// recommend_threshold.
  std::vector<ReviewMatch> rank_reviews(const corpus::BugReport& report, std::string_view target_app) const;
  std::vector<ReviewMatch> rank_reviews(std::span<const float> query, std::string_view target_app) const;

  /// Same scan with an explicit gate, depth and optional created_at cutoff
  /// (reviews at or after the cutoff are ignored).
  std::vector<ReviewMatch> rank_reviews(std::span<const float> query, std::string_view target_app, double threshold,
                                        std::size_t top_n, std::optional<Timestamp> cutoff) const;

  /// Most similar existing report of the target when at or above
  /// duplicate_threshold.
  std::optional<DuplicateHit> duplicate_check(const corpus::BugReport& report, std::string_view target_app) const;
  std::optional<DuplicateHit> duplicate_check(std::span<const float> query, std::string_view target_app) const;

  Recommendation recommend(const corpus::BugReport& report, std::string_view target_app) const;

  struct BatchResult {
    std::vector<Recommendation> recommendations;
    std::size_t skipped = 0;  // source reports with unembeddable titles
  };

  /// recommend() for every source report (store order) with an embeddable title.
  BatchResult recommend_all(std::string_view source_app, std::string_view target_app) const;

  /// Best B-report per A-report at or above ground_truth_threshold.
  GroundTruthResult build_ground_truth(std::span<const corpus::BugReport> reports_a,
                                       std::span<const corpus::BugReport> reports_b) const;

 private:
  std::span<const float> title_query(const corpus::BugReport& report) const;

  const corpus::CorpusStore& store_;
  const EmbeddingTable& table_;
  MatchConfig config_;
  ScanOptions scan_;
};

struct LeadTimeItem {
  std::string source_report;
  std::string review_id;
  double days = 0.0;
};

struct LeadTimeStats {
  double mean_days = 0.0;
  double median_days = 0.0;
  std::vector<LeadTimeItem> items;
};

/// Days between each decided recommendation's rank-1 review and `run_date`
/// (clamped at 0). Undecided recommendations are ignored.
LeadTimeStats lead_time_stats(std::span<const Recommendation> recommendations, const corpus::CorpusStore& store,
                              Timestamp run_date);

// ---------------------------------------------------------------- JSON Lines

/// One line, fixed field order, similarities with six decimals.
std::string to_jsonl(const Recommendation& rec);
std::string to_jsonl(const GroundTruthPair& pair);
Recommendation recommendation_from_json(std::string_view line);
GroundTruthPair ground_truth_pair_from_json(std::string_view line);

/// Lines of a JSONL output file, skipping the manifest line if present.
std::vector<std::string> read_jsonl_records(const std::filesystem::path& path);

}  // namespace revrec::matcher
