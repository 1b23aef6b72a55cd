#pragma once

#include "revrec/corpus.hpp"
#include "revrec/matcher.hpp"
#include "revrec/textprep.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace revrec::metrics {

/// Ground-truth size plus the rank at which each item's relevant result
/// appeared (absent = miss).
struct HitProfile {
  std::size_t length = 0;
  std::map<std::size_t, std::size_t> hit_ranks;  // ground-truth index -> 1-based rank
};

/// Fraction of ground-truth items hit within the first n results.
double acc_at_n(const HitProfile& profile, std::size_t n);

/// (1 / length) * sum over hits with rank <= n of 1 / rank. Misses count 0.
double mrr_at_n(const HitProfile& profile, std::size_t n);

struct EvalReport {
  std::size_t length = 0;
  std::vector<std::size_t> n_values;
  std::map<std::size_t, std::size_t> hits;  // N -> items hit within N
  std::map<std::size_t, double> acc;
  std::map<std::size_t, double> mrr;
};

EvalReport make_report(const HitProfile& profile, std::span<const std::size_t> n_values);

/// Aligned text table: hit counts, Acc@N and MRR@N rows in percent.
std::string format_table(const EvalReport& report);
std::string to_json(const EvalReport& report);

/// |x intersect y| / |x|. Throws EmptySet when x is empty.
double overlap_rate(const textprep::WordSet& x, const textprep::WordSet& y);

struct OverlapMatrix {
  std::vector<std::string> apps;
  std::vector<std::size_t> k_values;
  std::map<std::tuple<std::string, std::string, std::size_t>, double> cells;  // (x, y, K) -> Overlap(x_y)

  double at(const std::string& x, const std::string& y, std::size_t k) const;
};

/// Top-K frequent-word overlap between every ordered pair of apps, built
/// from bug-report title + body through the analysis pipeline.
OverlapMatrix overlap_matrix(const corpus::CorpusStore& store, std::span<const std::string> app_ids,
                             std::span<const std::size_t> k_values);

/// Rows: app pairs; columns: K.
std::string to_csv(const OverlapMatrix& matrix);

/// Relevance labels keyed by (A report id, B report id).
using Labels = std::map<std::pair<std::string, std::string>, std::vector<std::string>>;

/// Labels JSON Lines: {"pair": [a_report_id, b_report_id], "relevant_review_ids": [str]}.
Labels read_labels(const std::filesystem::path& path);

struct EvalOptions {
  std::size_t threads = 1;  // pairs evaluated in parallel
  /// Drop reviews below config.recommend_threshold before ranking. Off by
  /// default: evaluation looks at the top results whatever their score.
  bool apply_threshold = false;
};

struct EvalResult {
  EvalReport report;
  std::vector<matcher::GroundTruthPair> pairs;  // input pairs with hit_rank filled
};

/// For each pair, rank the reviews of report_b's app against report_a's
/// title, keeping only reviews created strictly before report_b, to a depth
/// of max(n_values). The hit rank is the first position holding a review the
/// labels mark relevant for the pair.
EvalResult evaluate_ground_truth(std::span<const matcher::GroundTruthPair> pairs, const corpus::CorpusStore& store,
                                 const matcher::EmbeddingTable& table, const matcher::MatchConfig& config,
                                 const Labels& labels, std::span<const std::size_t> n_values,
                                 const EvalOptions& options = {});

}  // namespace revrec::metrics
