#include "revrec/corpus.hpp"

#include "revrec/error.hpp"
#include "revrec/textprep.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>

namespace revrec::corpus {

namespace {

using nlohmann::json;

const std::vector<BugReport> kNoReports;
const std::vector<AppReview> kNoReviews;

// Per-line schema failure; caught by the ingest loop and counted.
struct LineError {
  std::string reason;
};

const json& require(const json& rec, const char* key) {
  const auto it = rec.find(key);
  if (it == rec.end() || it->is_null()) throw LineError{std::string("missing field '") + key + "'"};
  return *it;
}

std::string require_string(const json& rec, const char* key) {
  const json& v = require(rec, key);
  if (!v.is_string()) throw LineError{std::string("field '") + key + "' is not a string"};
  return v.get<std::string>();
}

// Ids may be given as strings or integers.
std::string require_id(const json& rec) {
  const json& v = require(rec, "id");
  if (v.is_string() && !v.get_ref<const std::string&>().empty()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  throw LineError{"field 'id' must be a non-empty string or integer"};
}

Timestamp require_timestamp(const json& rec, Timestamp now) {
  const auto ts = parse_rfc3339(require_string(rec, "created_at"));
  if (!ts) throw LineError{"field 'created_at' is not RFC 3339"};
  if (*ts > now) throw LineError{"field 'created_at' is in the future"};
  return *ts;
}

Timestamp resolve_now(const IngestOptions& options) {
  return options.now.value_or(std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now()));
}

template <typename Handler>
IngestStats ingest_lines(const std::filesystem::path& path, Handler&& handle) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  IngestStats stats;
  std::size_t non_blank = 0;
  std::size_t line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++non_blank;
    try {
      const json rec = json::parse(line);
      if (!rec.is_object()) throw LineError{"record is not a JSON object"};
      handle(rec, stats);
    } catch (const LineError& e) {
      ++stats.malformed;
      stats.warnings.push_back(path.string() + ":" + std::to_string(line_no) + ": " + e.reason);
    } catch (const json::exception& e) {
      ++stats.malformed;
      stats.warnings.push_back(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (in.bad()) throw Error(ErrorCode::kIo, "read failure on " + path.string());
  if (non_blank > 0 && stats.malformed * 2 > non_blank) {
    throw Error(ErrorCode::kSchemaViolation, path.string() + ": " + std::to_string(stats.malformed) + " of " +
                                                 std::to_string(non_blank) + " lines malformed");
  }
  return stats;
}

void check_app(const CorpusStore& store, std::string_view app_id) {
  if (!store.has_app(app_id)) throw Error(ErrorCode::kUnknownApp, "app '" + std::string(app_id) + "' is not registered");
}

}  // namespace

bool review_order_less(const AppReview& a, const AppReview& b) {
  if (a.helpful_count != b.helpful_count) return a.helpful_count > b.helpful_count;
  if (a.created_at != b.created_at) return a.created_at > b.created_at;
  return a.review_id < b.review_id;
}

void CorpusStore::register_app(AppDescriptor app) {
  if (app.app_id.empty()) throw Error(ErrorCode::kInvalidArgument, "app_id must be non-empty");
  if (app.category.empty()) throw Error(ErrorCode::kInvalidArgument, "app '" + app.app_id + "' has an empty category");
  const auto it = apps_.find(app.app_id);
  if (it != apps_.end()) {
    if (it->second == app) return;
    throw Error(ErrorCode::kInvalidArgument, "app '" + app.app_id + "' already registered with different metadata");
  }
  std::string key = app.app_id;
  apps_.emplace(std::move(key), std::move(app));
}

bool CorpusStore::has_app(std::string_view app_id) const { return apps_.find(app_id) != apps_.end(); }

const AppDescriptor& CorpusStore::app(std::string_view app_id) const {
  const auto it = apps_.find(app_id);
  if (it == apps_.end()) throw Error(ErrorCode::kUnknownApp, "app '" + std::string(app_id) + "' is not registered");
  return it->second;
}

const CorpusStore::AppData* CorpusStore::data(std::string_view app_id) const {
  const auto it = data_.find(app_id);
  return it == data_.end() ? nullptr : &it->second;
}

CorpusStore::AppData& CorpusStore::data_for_insert(const std::string& app_id) {
  check_app(*this, app_id);
  return data_[app_id];
}

const std::vector<BugReport>& CorpusStore::reports(std::string_view app_id) const {
  const AppData* d = data(app_id);
  return d ? d->reports : kNoReports;
}

const std::vector<AppReview>& CorpusStore::reviews(std::string_view app_id) const {
  const AppData* d = data(app_id);
  return d ? d->reviews : kNoReviews;
}

const BugReport* CorpusStore::find_report(std::string_view app_id, std::string_view report_id) const {
  const AppData* d = data(app_id);
  if (!d) return nullptr;
  const auto it = d->report_index.find(std::string(report_id));
  return it == d->report_index.end() ? nullptr : &d->reports[it->second];
}

const AppReview* CorpusStore::find_review(std::string_view app_id, std::string_view review_id) const {
  const AppData* d = data(app_id);
  if (!d) return nullptr;
  const auto it = d->review_index.find(std::string(review_id));
  return it == d->review_index.end() ? nullptr : &d->reviews[it->second];
}

bool CorpusStore::add_report(BugReport report) {
  AppData& d = data_for_insert(report.app_id);
  if (report.report_id.empty()) throw Error(ErrorCode::kInvalidArgument, "report_id must be non-empty");
  if (d.report_index.contains(report.report_id)) return false;
  d.report_index.emplace(report.report_id, d.reports.size());
  d.reports.push_back(std::move(report));
  return true;
}

bool CorpusStore::add_review(AppReview review) {
  AppData& d = data_for_insert(review.app_id);
  if (review.review_id.empty()) throw Error(ErrorCode::kInvalidArgument, "review_id must be non-empty");
  if (review.helpful_count < 0) throw Error(ErrorCode::kInvalidArgument, "helpful_count must be >= 0");
  review.cleaned = textprep::clean_for_embedding(review.text).cleaned;
  if (d.review_index.contains(review.review_id) || d.review_texts.contains(review.cleaned)) return false;
  const auto pos = std::upper_bound(d.reviews.begin(), d.reviews.end(), review, review_order_less);
  const auto first = static_cast<std::size_t>(pos - d.reviews.begin());
  d.review_texts.insert(review.cleaned);
  d.reviews.insert(pos, std::move(review));
  for (std::size_t i = first; i < d.reviews.size(); ++i) d.review_index[d.reviews[i].review_id] = i;
  return true;
}

std::size_t CorpusStore::add_reviews(std::vector<AppReview> reviews) {
  std::size_t accepted = 0;
  std::unordered_set<AppData*> touched;
  for (auto& review : reviews) {
    AppData& d = data_for_insert(review.app_id);
    if (review.review_id.empty()) throw Error(ErrorCode::kInvalidArgument, "review_id must be non-empty");
    if (review.helpful_count < 0) throw Error(ErrorCode::kInvalidArgument, "helpful_count must be >= 0");
    review.cleaned = textprep::clean_for_embedding(review.text).cleaned;
    if (d.review_index.contains(review.review_id) || d.review_texts.contains(review.cleaned)) continue;
    d.review_index.emplace(review.review_id, 0);
    d.review_texts.insert(review.cleaned);
    d.reviews.push_back(std::move(review));
    touched.insert(&d);
    ++accepted;
  }
  for (AppData* d : touched) {
    std::sort(d->reviews.begin(), d->reviews.end(), review_order_less);
    for (std::size_t i = 0; i < d->reviews.size(); ++i) d->review_index[d->reviews[i].review_id] = i;
  }
  return accepted;
}

std::size_t CorpusStore::report_count() const {
  std::size_t n = 0;
  for (const auto& [_, d] : data_) n += d.reports.size();
  return n;
}

std::size_t CorpusStore::review_count() const {
  std::size_t n = 0;
  for (const auto& [_, d] : data_) n += d.reviews.size();
  return n;
}

bool operator==(const CorpusStore& a, const CorpusStore& b) {
  if (a.apps_ != b.apps_) return false;
  for (const auto& [app_id, _] : a.apps_) {
    if (a.reports(app_id) != b.reports(app_id) || a.reviews(app_id) != b.reviews(app_id)) return false;
  }
  return true;
}

IngestStats ingest_reports(CorpusStore& store, const std::filesystem::path& path, std::string_view app_id,
                           const IngestOptions& options) {
  check_app(store, app_id);
  const Timestamp now = resolve_now(options);
  return ingest_lines(path, [&](const json& rec, IngestStats& stats) {
    BugReport report;
    report.app_id = std::string(app_id);
    report.report_id = require_id(rec);
    report.title = require_string(rec, "title");
    if (const auto it = rec.find("body"); it != rec.end() && !it->is_null()) {
      if (!it->is_string()) throw LineError{"field 'body' is not a string"};
      report.body = it->get<std::string>();
    }
    report.created_at = require_timestamp(rec, now);
    if (const auto it = rec.find("labels"); it != rec.end() && !it->is_null()) {
      if (!it->is_array()) throw LineError{"field 'labels' is not an array"};
      for (const auto& label : *it) {
        if (!label.is_string()) throw LineError{"field 'labels' must hold strings"};
        report.labels.push_back(label.get<std::string>());
      }
    }
    if (store.add_report(std::move(report))) {
      ++stats.accepted;
    } else {
      ++stats.duplicates;
    }
  });
}

IngestStats ingest_reviews(CorpusStore& store, const std::filesystem::path& path, std::string_view app_id,
                           const IngestOptions& options) {
  check_app(store, app_id);
  const Timestamp now = resolve_now(options);
  std::vector<AppReview> pending;
  IngestStats stats = ingest_lines(path, [&](const json& rec, IngestStats& line_stats) {
    AppReview review;
    review.app_id = std::string(app_id);
    review.review_id = require_id(rec);
    review.text = require_string(rec, "text");
    review.created_at = require_timestamp(rec, now);
    if (const auto it = rec.find("rating"); it != rec.end() && !it->is_null()) {
      if (!it->is_number_integer()) throw LineError{"field 'rating' is not an integer"};
      const int rating = it->get<int>();
      if (rating < 1 || rating > 5) throw LineError{"field 'rating' outside 1..5"};
      review.rating = rating;
    }
    if (const auto it = rec.find("helpful_count"); it != rec.end() && !it->is_null()) {
      if (!it->is_number_integer() || it->get<std::int64_t>() < 0) {
        throw LineError{"field 'helpful_count' must be a non-negative integer"};
      }
      review.helpful_count = it->get<std::int64_t>();
    }
    if (!review_length_admissible(textprep::clean_for_embedding(review.text).token_count)) {
      ++line_stats.length_rejected;
      return;
    }
    pending.push_back(std::move(review));
  });
  const std::size_t offered = pending.size();
  stats.accepted = store.add_reviews(std::move(pending));
  stats.duplicates = offered - stats.accepted;
  return stats;
}

// ---------------------------------------------------------------- persistence

namespace {

json app_to_json(const AppDescriptor& app) {
  json j = {{"app_id", app.app_id}, {"name", app.name}, {"category", app.category}};
  j["repo"] = app.repo ? json(*app.repo) : json(nullptr);
  return j;
}

json report_to_json(const BugReport& r) {
  json j = {{"app_id", r.app_id}, {"id", r.report_id}, {"title", r.title}};
  j["body"] = r.body ? json(*r.body) : json(nullptr);
  j["created_at"] = format_rfc3339(r.created_at);
  j["labels"] = r.labels;
  return j;
}

json review_to_json(const AppReview& r) {
  json j = {{"app_id", r.app_id}, {"id", r.review_id}, {"text", r.text}};
  j["created_at"] = format_rfc3339(r.created_at);
  j["rating"] = r.rating ? json(*r.rating) : json(nullptr);
  j["helpful_count"] = r.helpful_count;
  return j;
}

[[noreturn]] void corrupt(const std::filesystem::path& path, const std::string& what) {
  throw Error(ErrorCode::kIo, "corrupt store file " + path.string() + ": " + what);
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      corrupt(path, e.what());
    }
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << content;
  out.flush();
  if (!out) throw Error(ErrorCode::kIo, "write failure on " + path.string());
}

}  // namespace

void save_store(const CorpusStore& store, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());

  std::string reports;
  std::string reviews;
  json apps = json::array();
  for (const auto& [app_id, app] : store.apps()) {
    apps.push_back(app_to_json(app));
    for (const auto& r : store.reports(app_id)) reports += report_to_json(r).dump() + "\n";
    for (const auto& r : store.reviews(app_id)) reviews += review_to_json(r).dump() + "\n";
  }
  const json manifest = {{"format_version", kStoreFormatVersion},
                         {"apps", apps},
                         {"report_count", store.report_count()},
                         {"review_count", store.review_count()}};
  // Manifest last: a store directory without a complete manifest never loads.
  write_file(dir / "reports.jsonl", reports);
  write_file(dir / "reviews.jsonl", reviews);
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

CorpusStore load_store(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    corrupt(manifest_path, e.what());
  }
  if (!manifest.is_object() || !manifest.contains("format_version") || !manifest["format_version"].is_number_integer()) {
    throw Error(ErrorCode::kVersionMismatch, manifest_path.string() + " has no integer format_version");
  }
  if (const int version = manifest["format_version"].get<int>(); version != kStoreFormatVersion) {
    throw Error(ErrorCode::kVersionMismatch, manifest_path.string() + " has format_version " + std::to_string(version) +
                                                 ", expected " + std::to_string(kStoreFormatVersion));
  }

  CorpusStore store;
  try {
    for (const auto& a : manifest.at("apps")) {
      AppDescriptor app;
      app.app_id = a.at("app_id").get<std::string>();
      app.name = a.at("name").get<std::string>();
      app.category = a.at("category").get<std::string>();
      if (a.contains("repo") && !a["repo"].is_null()) app.repo = a["repo"].get<std::string>();
      store.register_app(std::move(app));
    }
  } catch (const json::exception& e) {
    corrupt(manifest_path, e.what());
  }

  const auto reports_path = dir / "reports.jsonl";
  const auto reviews_path = dir / "reviews.jsonl";
  const auto parse_ts = [](const json& j, const std::filesystem::path& path) {
    const auto ts = parse_rfc3339(j.get<std::string>());
    if (!ts) corrupt(path, "bad timestamp");
    return *ts;
  };
  try {
    for (const auto& j : read_jsonl(reports_path)) {
      BugReport r;
      r.app_id = j.at("app_id").get<std::string>();
      r.report_id = j.at("id").get<std::string>();
      r.title = j.at("title").get<std::string>();
      if (!j.at("body").is_null()) r.body = j["body"].get<std::string>();
      r.created_at = parse_ts(j.at("created_at"), reports_path);
      r.labels = j.at("labels").get<std::vector<std::string>>();
      if (!store.add_report(std::move(r))) corrupt(reports_path, "duplicate report");
    }
    std::vector<AppReview> reviews;
    for (const auto& j : read_jsonl(reviews_path)) {
      AppReview r;
      r.app_id = j.at("app_id").get<std::string>();
      r.review_id = j.at("id").get<std::string>();
      r.text = j.at("text").get<std::string>();
      r.created_at = parse_ts(j.at("created_at"), reviews_path);
      if (!j.at("rating").is_null()) r.rating = j["rating"].get<int>();
      r.helpful_count = j.at("helpful_count").get<std::int64_t>();
      reviews.push_back(std::move(r));
    }
    const std::size_t offered = reviews.size();
    if (store.add_reviews(std::move(reviews)) != offered) corrupt(reviews_path, "duplicate review");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIo, "corrupt store in " + dir.string() + ": " + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIo) throw;
    throw Error(ErrorCode::kIo, "corrupt store in " + dir.string() + ": " + e.what());
  }

  if (manifest.value("report_count", std::size_t{0}) != store.report_count()) {
    corrupt(reports_path, "record count differs from manifest");
  }
  if (manifest.value("review_count", std::size_t{0}) != store.review_count()) {
    corrupt(reviews_path, "record count differs from manifest");
  }
  return store;
}

}  // namespace revrec::corpus
