#include "revrec/metrics.hpp"

#include "revrec/error.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <limits>
#include <thread>
#include <unordered_set>

namespace revrec::metrics {

namespace {

using nlohmann::json;

void check_cutoff(const HitProfile& profile, std::size_t n) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "cutoff N must be >= 1");
  if (profile.length == 0) throw Error(ErrorCode::kInvalidArgument, "hit profile length must be >= 1");
  if (profile.hit_ranks.size() > profile.length) {
    throw Error(ErrorCode::kInvalidArgument, "hit profile records more hits than its length");
  }
}

}  // namespace

double acc_at_n(const HitProfile& profile, std::size_t n) {
  check_cutoff(profile, n);
  std::size_t hits = 0;
  for (const auto& [_, rank] : profile.hit_ranks) {
    if (rank >= 1 && rank <= n) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(profile.length);
}

double mrr_at_n(const HitProfile& profile, std::size_t n) {
  check_cutoff(profile, n);
  double sum = 0.0;
  for (const auto& [_, rank] : profile.hit_ranks) {
    if (rank >= 1 && rank <= n) sum += 1.0 / static_cast<double>(rank);
  }
  return sum / static_cast<double>(profile.length);
}

EvalReport make_report(const HitProfile& profile, std::span<const std::size_t> n_values) {
  if (n_values.empty()) throw Error(ErrorCode::kInvalidArgument, "at least one cutoff N is required");
  EvalReport report;
  report.length = profile.length;
  report.n_values.assign(n_values.begin(), n_values.end());
  std::sort(report.n_values.begin(), report.n_values.end());
  report.n_values.erase(std::unique(report.n_values.begin(), report.n_values.end()), report.n_values.end());
  for (const std::size_t n : report.n_values) {
    report.acc[n] = acc_at_n(profile, n);
    report.mrr[n] = mrr_at_n(profile, n);
    report.hits[n] = static_cast<std::size_t>(
        std::count_if(profile.hit_ranks.begin(), profile.hit_ranks.end(), [n](const auto& h) { return h.second <= n; }));
  }
  return report;
}

std::string format_table(const EvalReport& report) {
  constexpr int kLabel = 20;
  constexpr int kCell = 8;
  std::string out = fmt::format("{:<{}}", "", kLabel);
  for (const auto n : report.n_values) out += fmt::format("{:>{}}", fmt::format("N={}", n), kCell);
  out += "\n" + fmt::format("{:<{}}", "App Review Hits", kLabel);
  for (const auto n : report.n_values) out += fmt::format("{:>{}}", report.hits.at(n), kCell);
  out += "\n" + fmt::format("{:<{}}", "Value of Acc@N(%)", kLabel);
  for (const auto n : report.n_values) out += fmt::format("{:>{}.2f}", report.acc.at(n) * 100.0, kCell);
  out += "\n" + fmt::format("{:<{}}", "Value of MRR@N(%)", kLabel);
  for (const auto n : report.n_values) out += fmt::format("{:>{}.2f}", report.mrr.at(n) * 100.0, kCell);
  out += "\n" + fmt::format("{:<{}}{:>{}}\n", "Ground truth size", kLabel, report.length, kCell);
  return out;
}

std::string to_json(const EvalReport& report) {
  json j;
  j["length"] = report.length;
  j["n_values"] = report.n_values;
  json acc = json::object();
  json mrr = json::object();
  json hits = json::object();
  for (const auto n : report.n_values) {
    acc[std::to_string(n)] = report.acc.at(n);
    mrr[std::to_string(n)] = report.mrr.at(n);
    hits[std::to_string(n)] = report.hits.at(n);
  }
  j["hits"] = hits;
  j["acc"] = acc;
  j["mrr"] = mrr;
  return j.dump(2);
}

// ---------------------------------------------------------------- overlap

double overlap_rate(const textprep::WordSet& x, const textprep::WordSet& y) {
  if (x.empty()) throw Error(ErrorCode::kEmptySet, "overlap rate of an empty word set");
  const std::unordered_set<std::string> other(y.words.begin(), y.words.end());
  std::size_t shared = 0;
  for (const auto& w : x.words) {
    if (other.contains(w)) ++shared;
  }
  return static_cast<double>(shared) / static_cast<double>(x.size());
}

double OverlapMatrix::at(const std::string& x, const std::string& y, std::size_t k) const {
  const auto it = cells.find({x, y, k});
  if (it == cells.end()) throw Error(ErrorCode::kInvalidArgument, fmt::format("no overlap cell ({}, {}, {})", x, y, k));
  return it->second;
}

OverlapMatrix overlap_matrix(const corpus::CorpusStore& store, std::span<const std::string> app_ids,
                             std::span<const std::size_t> k_values) {
  if (k_values.empty()) throw Error(ErrorCode::kInvalidArgument, "at least one K is required");
  if (std::find(k_values.begin(), k_values.end(), std::size_t{0}) != k_values.end()) {
    throw Error(ErrorCode::kInvalidArgument, "K must be >= 1");
  }
  OverlapMatrix matrix;
  matrix.apps.assign(app_ids.begin(), app_ids.end());
  matrix.k_values.assign(k_values.begin(), k_values.end());

  // Full frequency ordering per app; Top-K is its K-prefix.
  std::map<std::string, textprep::WordSet> ranked;
  for (const auto& app_id : matrix.apps) {
    const auto& reports = store.reports(store.app(app_id).app_id);
    if (reports.empty()) throw Error(ErrorCode::kEmptyCorpus, "app '" + app_id + "' has no bug reports");
    std::vector<std::string> docs;
    docs.reserve(reports.size());
    for (const auto& r : reports) docs.push_back(r.body ? r.title + " " + *r.body : r.title);
    auto terms = textprep::ranked_terms(textprep::count_terms(docs));
    if (terms.empty()) throw Error(ErrorCode::kEmptyCorpus, "app '" + app_id + "' has no analyzable words");
    ranked.emplace(app_id, std::move(terms));
  }
  for (const auto k : matrix.k_values) {
    for (const auto& x : matrix.apps) {
      const auto top_x = ranked.at(x).prefix(k);
      for (const auto& y : matrix.apps) {
        matrix.cells[{x, y, k}] = overlap_rate(top_x, ranked.at(y).prefix(k));
      }
    }
  }
  return matrix;
}

std::string to_csv(const OverlapMatrix& matrix) {
  std::string out = "app_x,app_y";
  for (const auto k : matrix.k_values) out += fmt::format(",top{}", k);
  out += '\n';
  for (const auto& x : matrix.apps) {
    for (const auto& y : matrix.apps) {
      out += x + "," + y;
      for (const auto k : matrix.k_values) out += fmt::format(",{:.6f}", matrix.at(x, y, k));
      out += '\n';
    }
  }
  return out;
}

// ---------------------------------------------------------------- evaluation

Labels read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  Labels labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      const auto& pair = j.at("pair");
      if (!pair.is_array() || pair.size() != 2) throw Error(ErrorCode::kSchemaViolation, "'pair' must have two ids");
      auto& relevant = labels[{pair[0].get<std::string>(), pair[1].get<std::string>()}];
      for (const auto& id : j.at("relevant_review_ids")) relevant.push_back(id.get<std::string>());
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kSchemaViolation, fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    } catch (const Error& e) {
      throw Error(ErrorCode::kSchemaViolation, fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
  return labels;
}

EvalResult evaluate_ground_truth(std::span<const matcher::GroundTruthPair> pairs, const corpus::CorpusStore& store,
                                 const matcher::EmbeddingTable& table, const matcher::MatchConfig& config,
                                 const Labels& labels, std::span<const std::size_t> n_values,
                                 const EvalOptions& options) {
  if (pairs.empty()) throw Error(ErrorCode::kEmptyCorpus, "no ground-truth pairs to evaluate");
  if (n_values.empty()) throw Error(ErrorCode::kInvalidArgument, "at least one cutoff N is required");
  const std::size_t depth = *std::max_element(n_values.begin(), n_values.end());
  if (depth == 0) throw Error(ErrorCode::kInvalidArgument, "cutoff N must be >= 1");

  // Resolve everything up front so workers never throw.
  struct Job {
    std::span<const float> query;
    std::string target_app;
    Timestamp cutoff;
    const std::vector<std::string>* relevant;
  };
  std::vector<Job> jobs;
  jobs.reserve(pairs.size());
  for (const auto& pair : pairs) {
    const auto label = labels.find({pair.report_a.report_id, pair.report_b.report_id});
    if (label == labels.end()) {
      throw Error(ErrorCode::kMissingLabels,
                  "no relevance labels for pair " + pair.report_a.report_id + " / " + pair.report_b.report_id);
    }
    const corpus::BugReport* b = store.find_report(pair.report_b.app_id, pair.report_b.report_id);
    if (!b) {
      throw Error(ErrorCode::kUnknownApp, "report " + pair.report_b.app_id + "/" + pair.report_b.report_id + " not in store");
    }
    const auto query = table.title_vector(pair.report_a.app_id, pair.report_a.report_id);
    if (!query) {
      throw Error(ErrorCode::kEmptyTextEmbedding,
                  "report " + pair.report_a.app_id + "/" + pair.report_a.report_id + " has no embeddable title");
    }
    jobs.push_back({*query, pair.report_b.app_id, b->created_at, &label->second});
  }

  const matcher::Matcher matcher(store, table, config);
  const double threshold = options.apply_threshold ? config.recommend_threshold : -std::numeric_limits<double>::infinity();
  std::vector<std::optional<std::size_t>> hit_ranks(jobs.size());
  const auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto ranked = matcher.rank_reviews(jobs[i].query, jobs[i].target_app, threshold, depth, jobs[i].cutoff);
      const auto& relevant = *jobs[i].relevant;
      for (const auto& m : ranked) {
        if (std::find(relevant.begin(), relevant.end(), m.review_id) != relevant.end()) {
          hit_ranks[i] = m.rank;
          break;
        }
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, jobs.size());
  if (threads == 1) {
    run(0, jobs.size());
  } else {
    std::vector<std::thread> workers;
    const std::size_t chunk = (jobs.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t begin = std::min(jobs.size(), t * chunk);
      workers.emplace_back(run, begin, std::min(jobs.size(), begin + chunk));
    }
    for (auto& w : workers) w.join();
  }

  EvalResult result;
  HitProfile profile;
  profile.length = pairs.size();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    result.pairs.push_back(pairs[i]);
    result.pairs.back().hit_rank = hit_ranks[i];
    if (hit_ranks[i]) profile.hit_ranks[i] = *hit_ranks[i];
  }
  result.report = make_report(profile, n_values);
  return result;
}

}  // namespace revrec::metrics
