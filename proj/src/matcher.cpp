#include "revrec/matcher.hpp"

#include "revrec/error.hpp"
#include "revrec/textprep.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <thread>

namespace revrec::matcher {

namespace {

using nlohmann::json;
using corpus::AppReview;
using corpus::BugReport;

const VectorBlock kEmptyBlock;

}  // namespace

// ---------------------------------------------------------------- VectorBlock

void VectorBlock::append(std::span<const float> row) {
  if (row.size() != dim_) {
    throw Error(ErrorCode::kDimensionMismatch,
                "row of " + std::to_string(row.size()) + " components in a " + std::to_string(dim_) + "-dim block");
  }
  data_.insert(data_.end(), row.begin(), row.end());
  norms_.push_back(std::sqrt(embedding::dot(row, row)));
  present_.push_back(true);
}

void VectorBlock::append_absent() {
  data_.resize(data_.size() + dim_, 0.0F);
  norms_.push_back(0.0);
  present_.push_back(false);
}

// ---------------------------------------------------------------- EmbeddingTable

EmbeddingTable EmbeddingTable::build(const corpus::CorpusStore& store, embedding::Embedder& embedder,
                                     embedding::EmbeddingCache* cache, const TableBuildOptions& options) {
  EmbeddingTable table;
  table.store_ = &store;

  // One embed_corpus call over every text so the backend sees full batches.
  std::vector<std::string> texts;
  for (const auto& [app_id, _] : store.apps()) {
    const auto& reviews = store.reviews(app_id);
    if (options.spell_correct) {
      std::vector<std::string> cleaned;
      cleaned.reserve(reviews.size());
      for (const auto& r : reviews) cleaned.push_back(r.cleaned);
      const textprep::SpellingCorrector corrector(cleaned);
      for (const auto& c : cleaned) texts.push_back(corrector.correct(c));
    } else {
      for (const auto& r : reviews) texts.push_back(r.cleaned);
    }
    for (const auto& r : store.reports(app_id)) texts.push_back(r.title);
  }
  embedding::EmbedCorpusOptions embed_options;
  embed_options.strict = false;
  const auto vectors = embedding::embed_corpus(texts, embedder, cache, embed_options);

  for (const auto& v : vectors) {
    if (v) {
      table.dim_ = v->dim();
      break;
    }
  }
  if (table.dim_ == 0) table.dim_ = embedder.dim();

  std::size_t pos = 0;
  for (const auto& [app_id, _] : store.apps()) {
    VectorBlock reviews(table.dim_);
    for (std::size_t i = 0; i < store.reviews(app_id).size(); ++i, ++pos) {
      if (vectors[pos]) {
        reviews.append(vectors[pos]->values);
      } else {
        reviews.append_absent();
        ++table.unembeddable_reviews_;
      }
    }
    VectorBlock reports(table.dim_);
    for (std::size_t i = 0; i < store.reports(app_id).size(); ++i, ++pos) {
      if (vectors[pos]) {
        reports.append(vectors[pos]->values);
      } else {
        reports.append_absent();
        ++table.unembeddable_titles_;
      }
    }
    table.reviews_.emplace(app_id, std::move(reviews));
    table.reports_.emplace(app_id, std::move(reports));
  }
  return table;
}

const VectorBlock& EmbeddingTable::reviews(std::string_view app_id) const {
  const auto it = reviews_.find(app_id);
  return it == reviews_.end() ? kEmptyBlock : it->second;
}

const VectorBlock& EmbeddingTable::reports(std::string_view app_id) const {
  const auto it = reports_.find(app_id);
  return it == reports_.end() ? kEmptyBlock : it->second;
}

std::optional<std::span<const float>> EmbeddingTable::title_vector(std::string_view app_id,
                                                                   std::string_view report_id) const {
  if (!store_) return std::nullopt;
  const BugReport* report = store_->find_report(app_id, report_id);
  if (!report) return std::nullopt;
  const auto& list = store_->reports(app_id);
  const auto row = static_cast<std::size_t>(report - list.data());
  const VectorBlock& block = reports(app_id);
  if (row >= block.rows() || !block.present(row)) return std::nullopt;
  return block.row(row);
}

// ---------------------------------------------------------------- config

void MatchConfig::validate() const {
  const auto in_range = [](double t) { return std::isfinite(t) && t > 0.0 && t <= 1.0; };
  if (!in_range(recommend_threshold)) throw Error(ErrorCode::kInvalidArgument, "recommend threshold must be in (0, 1]");
  if (!in_range(ground_truth_threshold)) {
    throw Error(ErrorCode::kInvalidArgument, "ground-truth threshold must be in (0, 1]");
  }
  if (!in_range(duplicate_threshold)) throw Error(ErrorCode::kInvalidArgument, "duplicate threshold must be in (0, 1]");
  if (top_n == 0) throw Error(ErrorCode::kInvalidArgument, "top_n must be >= 1");
}

// ---------------------------------------------------------------- scan

std::vector<ScanHit> scan_top_n(std::span<const float> query, const VectorBlock& block, double threshold,
                                std::size_t top_n, const std::function<bool(std::size_t)>& keep,
                                const std::function<bool(std::size_t, std::size_t)>& tie_break,
                                const ScanOptions& options) {
  if (top_n == 0 || block.rows() == 0) return {};
  if (query.size() != block.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "query has " + std::to_string(query.size()) + " components, block has " +
                                                   std::to_string(block.dim()));
  }
  // better(a, b): a ranks ahead of b.
  const auto better = [&](const ScanHit& a, const ScanHit& b) {
    if (a.key != b.key) return a.key > b.key;
    return tie_break(a.row, b.row);
  };

  const double query_norm = std::sqrt(embedding::dot(query, query));
  if (query_norm == 0.0) throw Error(ErrorCode::kZeroVector, "scan with a zero query vector");

  const auto scan_range = [&](std::size_t begin, std::size_t end) {
    std::vector<ScanHit> heap;  // worst candidate at the front
    heap.reserve(top_n + 1);
    for (std::size_t r = begin; r < end; ++r) {
      if (!block.present(r) || (keep && !keep(r))) continue;
      const double sim =
          std::clamp(embedding::dot(query, block.row(r)) / (query_norm * block.norm(r)), -1.0, 1.0);
      if (sim < threshold) continue;
      const ScanHit hit{sim, r};
      if (heap.size() == top_n && !better(hit, heap.front())) continue;
      heap.push_back(hit);
      std::push_heap(heap.begin(), heap.end(), better);
      if (heap.size() > top_n) {
        std::pop_heap(heap.begin(), heap.end(), better);
        heap.pop_back();
      }
    }
    return heap;
  };

  const std::size_t rows = block.rows();
  const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, rows);
  std::vector<std::vector<ScanHit>> partial(threads);
  if (threads == 1) {
    partial[0] = scan_range(0, rows);
  } else {
    std::vector<std::thread> workers;
    workers.reserve(threads);
    const std::size_t chunk = (rows + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t begin = std::min(rows, t * chunk);
      const std::size_t end = std::min(rows, begin + chunk);
      workers.emplace_back([&, t, begin, end] { partial[t] = scan_range(begin, end); });
    }
    for (auto& w : workers) w.join();
  }

  std::vector<ScanHit> merged;
  for (auto& p : partial) merged.insert(merged.end(), p.begin(), p.end());
  std::sort(merged.begin(), merged.end(), better);
  if (merged.size() > top_n) merged.resize(top_n);
  return merged;
}

std::vector<AppReview> temporal_review_filter(std::span<const AppReview> reviews, Timestamp cutoff) {
  std::vector<AppReview> out;
  for (const auto& r : reviews) {
    if (r.created_at < cutoff) out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------- Matcher

Matcher::Matcher(const corpus::CorpusStore& store, const EmbeddingTable& table, MatchConfig config, ScanOptions scan)
    : store_(store), table_(table), config_(config), scan_(scan) {
  const auto positive = [](double t) { return !std::isnan(t) && t > 0.0; };
  if (!positive(config_.recommend_threshold) || !positive(config_.ground_truth_threshold) ||
      !positive(config_.duplicate_threshold)) {
    throw Error(ErrorCode::kInvalidArgument, "similarity thresholds must be > 0");
  }
  if (config_.top_n == 0) throw Error(ErrorCode::kInvalidArgument, "top_n must be >= 1");
}

std::span<const float> Matcher::title_query(const BugReport& report) const {
  const auto vec = table_.title_vector(report.app_id, report.report_id);
  if (!vec) {
    throw Error(ErrorCode::kEmptyTextEmbedding,
                "report " + report.app_id + "/" + report.report_id + " has no embeddable title");
  }
  return *vec;
}

std::vector<ReviewMatch> Matcher::rank_reviews(const BugReport& report, std::string_view target_app) const {
  store_.app(target_app);
  return rank_reviews(title_query(report), target_app);
}

std::vector<ReviewMatch> Matcher::rank_reviews(std::span<const float> query, std::string_view target_app) const {
  return rank_reviews(query, target_app, config_.recommend_threshold, config_.top_n, std::nullopt);
}

std::vector<ReviewMatch> Matcher::rank_reviews(std::span<const float> query, std::string_view target_app,
                                               double threshold, std::size_t top_n,
                                               std::optional<Timestamp> cutoff) const {
  store_.app(target_app);
  const auto& reviews = store_.reviews(target_app);
  const VectorBlock& block = table_.reviews(target_app);
  std::function<bool(std::size_t)> keep;
  if (cutoff) keep = [&](std::size_t r) { return reviews[r].created_at < *cutoff; };
  const auto tie_break = [&](std::size_t a, std::size_t b) {
    if (reviews[a].created_at != reviews[b].created_at) return reviews[a].created_at > reviews[b].created_at;
    return reviews[a].review_id < reviews[b].review_id;
  };
  const auto hits = scan_top_n(query, block, threshold, top_n, keep, tie_break, scan_);
  std::vector<ReviewMatch> out;
  out.reserve(hits.size());
  for (std::size_t i = 0; i < hits.size(); ++i) {
    out.push_back({reviews[hits[i].row].review_id, hits[i].similarity, i + 1});
  }
  return out;
}

namespace {

// Report tie-break shared by duplicate search and ground truth.
bool report_ahead(const BugReport& a, const BugReport& b) {
  if (a.created_at != b.created_at) return a.created_at > b.created_at;
  return a.report_id < b.report_id;
}

}  // namespace

std::optional<DuplicateHit> Matcher::duplicate_check(const BugReport& report, std::string_view target_app) const {
  store_.app(target_app);
  return duplicate_check(title_query(report), target_app);
}

std::optional<DuplicateHit> Matcher::duplicate_check(std::span<const float> query, std::string_view target_app) const {
  store_.app(target_app);
  const auto& reports = store_.reports(target_app);
  const auto hits = scan_top_n(
      query, table_.reports(target_app), config_.duplicate_threshold, 1, {},
      [&](std::size_t a, std::size_t b) { return report_ahead(reports[a], reports[b]); }, scan_);
  if (hits.empty()) return std::nullopt;
  return DuplicateHit{reports[hits.front().row].report_id, hits.front().similarity};
}

Recommendation Matcher::recommend(const BugReport& report, std::string_view target_app) const {
  Recommendation rec;
  rec.source_app = report.app_id;
  rec.source_report = report.report_id;
  rec.target_app = std::string(target_app);
  const auto query = title_query(report);
  rec.duplicate_of = duplicate_check(query, target_app);
  if (rec.duplicate_of) return rec;
  rec.matches = rank_reviews(query, target_app);
  rec.decided = !rec.matches.empty() && rec.matches.front().similarity >= config_.recommend_threshold;
  return rec;
}

Matcher::BatchResult Matcher::recommend_all(std::string_view source_app, std::string_view target_app) const {
  store_.app(source_app);
  store_.app(target_app);
  BatchResult out;
  for (const auto& report : store_.reports(source_app)) {
    if (!table_.title_vector(report.app_id, report.report_id)) {
      ++out.skipped;
      continue;
    }
    out.recommendations.push_back(recommend(report, target_app));
  }
  return out;
}

GroundTruthResult Matcher::build_ground_truth(std::span<const BugReport> reports_a,
                                              std::span<const BugReport> reports_b) const {
  if (reports_a.empty() || reports_b.empty()) {
    throw Error(ErrorCode::kEmptyCorpus, "ground truth needs bug reports on both sides");
  }
  std::vector<std::optional<std::span<const float>>> b_vectors;
  b_vectors.reserve(reports_b.size());
  for (const auto& b : reports_b) b_vectors.push_back(table_.title_vector(b.app_id, b.report_id));

  GroundTruthResult out;
  for (const auto& a : reports_a) {
    const auto query = table_.title_vector(a.app_id, a.report_id);
    if (!query) {
      ++out.skipped;
      continue;
    }
    std::optional<std::size_t> best;
    double best_sim = -std::numeric_limits<double>::infinity();
    std::int64_t best_key = 0;
    for (std::size_t j = 0; j < reports_b.size(); ++j) {
      if (!b_vectors[j]) continue;
      const double sim = embedding::cosine(*query, *b_vectors[j]);
      const std::int64_t key = similarity_key(sim);
      if (!best || key > best_key || (key == best_key && report_ahead(reports_b[j], reports_b[*best]))) {
        best = j;
        best_sim = sim;
        best_key = key;
      }
    }
    if (best && best_sim >= config_.ground_truth_threshold) {
      out.pairs.push_back({{a.app_id, a.report_id}, {reports_b[*best].app_id, reports_b[*best].report_id}, best_sim, {}});
    }
  }
  return out;
}

// ---------------------------------------------------------------- lead time

LeadTimeStats lead_time_stats(std::span<const Recommendation> recommendations, const corpus::CorpusStore& store,
                              Timestamp run_date) {
  LeadTimeStats stats;
  for (const auto& rec : recommendations) {
    if (!rec.decided) continue;
    if (rec.matches.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "decided recommendation " + rec.source_report + " has no matches");
    }
    const AppReview* review = store.find_review(rec.target_app, rec.matches.front().review_id);
    if (!review) {
      throw Error(ErrorCode::kUnknownApp,
                  "review " + rec.target_app + "/" + rec.matches.front().review_id + " is not in the store");
    }
    stats.items.push_back({rec.source_report, review->review_id, std::max(0.0, days_between(review->created_at, run_date))});
  }
  if (stats.items.empty()) throw Error(ErrorCode::kNoDecidedRecommendations, "no decided recommendations");

  std::vector<double> days;
  days.reserve(stats.items.size());
  double sum = 0.0;
  for (const auto& item : stats.items) {
    days.push_back(item.days);
    sum += item.days;
  }
  stats.mean_days = sum / static_cast<double>(days.size());
  std::sort(days.begin(), days.end());
  const std::size_t mid = days.size() / 2;
  stats.median_days = days.size() % 2 == 1 ? days[mid] : (days[mid - 1] + days[mid]) / 2.0;
  return stats;
}

// ---------------------------------------------------------------- JSON Lines

namespace {

std::string quote(const std::string& s) { return json(s).dump(); }

std::string fixed6(double v) { return fmt::format("{:.6f}", v); }

}  // namespace

std::string to_jsonl(const Recommendation& rec) {
  std::string out = fmt::format(R"({{"source_app":{},"source_report":{},"target_app":{},"decided":{},"duplicate_of":)",
                                quote(rec.source_app), quote(rec.source_report), quote(rec.target_app),
                                rec.decided ? "true" : "false");
  if (rec.duplicate_of) {
    out += fmt::format(R"({{"report_id":{},"similarity":{}}})", quote(rec.duplicate_of->report_id),
                       fixed6(rec.duplicate_of->similarity));
  } else {
    out += "null";
  }
  out += R"(,"matches":[)";
  for (std::size_t i = 0; i < rec.matches.size(); ++i) {
    const auto& m = rec.matches[i];
    if (i > 0) out += ',';
    out += fmt::format(R"({{"rank":{},"review_id":{},"similarity":{}}})", m.rank, quote(m.review_id),
                       fixed6(m.similarity));
  }
  out += "]}";
  return out;
}

std::string to_jsonl(const GroundTruthPair& pair) {
  return fmt::format(R"({{"report_a":[{},{}],"report_b":[{},{}],"pair_similarity":{},"hit_rank":{}}})",
                     quote(pair.report_a.app_id), quote(pair.report_a.report_id), quote(pair.report_b.app_id),
                     quote(pair.report_b.report_id), fixed6(pair.pair_similarity),
                     pair.hit_rank ? std::to_string(*pair.hit_rank) : std::string("null"));
}

Recommendation recommendation_from_json(std::string_view line) {
  try {
    const json j = json::parse(line);
    Recommendation rec;
    rec.source_app = j.at("source_app").get<std::string>();
    rec.source_report = j.at("source_report").get<std::string>();
    rec.target_app = j.at("target_app").get<std::string>();
    rec.decided = j.at("decided").get<bool>();
    if (const auto& d = j.at("duplicate_of"); !d.is_null()) {
      rec.duplicate_of = DuplicateHit{d.at("report_id").get<std::string>(), d.at("similarity").get<double>()};
    }
    for (const auto& m : j.at("matches")) {
      rec.matches.push_back({m.at("review_id").get<std::string>(), m.at("similarity").get<double>(),
                             m.at("rank").get<std::size_t>()});
    }
    return rec;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("bad recommendation record: ") + e.what());
  }
}

GroundTruthPair ground_truth_pair_from_json(std::string_view line) {
  try {
    const json j = json::parse(line);
    GroundTruthPair pair;
    const auto& a = j.at("report_a");
    const auto& b = j.at("report_b");
    if (!a.is_array() || a.size() != 2 || !b.is_array() || b.size() != 2) {
      throw Error(ErrorCode::kSchemaViolation, "report_a/report_b must be [app_id, report_id]");
    }
    pair.report_a = {a[0].get<std::string>(), a[1].get<std::string>()};
    pair.report_b = {b[0].get<std::string>(), b[1].get<std::string>()};
    pair.pair_similarity = j.at("pair_similarity").get<double>();
    if (j.contains("hit_rank") && !j["hit_rank"].is_null()) pair.hit_rank = j["hit_rank"].get<std::size_t>();
    return pair;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("bad ground-truth record: ") + e.what());
  }
}

std::vector<std::string> read_jsonl_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (line.starts_with(R"({"manifest":)")) continue;
    out.push_back(line);
  }
  return out;
}

}  // namespace revrec::matcher
