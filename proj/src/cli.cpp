#include "revrec/cli.hpp"

#include "revrec/corpus.hpp"
#include "revrec/embedding.hpp"
#include "revrec/error.hpp"
#include "revrec/matcher.hpp"
#include "revrec/metrics.hpp"

#ifdef REVREC_CLI11_PACKAGE
#include <CLI/CLI.hpp>
#else
#include <CLI11.hpp>
#endif
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>

namespace revrec::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct EmbedFlags {
  std::string backend = "hash";
  std::size_t dim = 256;
  std::string endpoint;
  std::uint64_t seed = 42;
  std::string cache;
  bool spell_correct = false;
  CLI::Option* dim_opt = nullptr;
};

struct MatchFlags {
  double threshold = 0.9;
  double gt_threshold = 0.91;
  double dup_threshold = 0.91;
  std::size_t top_n = 3;
  std::size_t threads = 1;
};

struct Flags {
  std::string store;
  std::string out;
  EmbedFlags embed;
  MatchFlags match;
  // ingest
  std::string app;
  std::string name;
  std::string category;
  std::string repo;
  std::string reports;
  std::string reviews;
  // recommend / ground-truth
  std::string source_app;
  std::string target_app;
  // eval
  std::string pairs;
  std::string labels;
  std::vector<std::size_t> n_values{1, 2, 3};
  // overlap
  std::vector<std::string> apps;
  std::vector<std::size_t> k_values{100, 200, 300, 400, 500, 600, 700, 800, 900, 1000};
  // stats
  std::string recs;
  std::string run_date;
};

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kUnknownApp:
      return kExitConfig;
    case ErrorCode::kSidecarUnavailable:
      return kExitBackend;
    default:
      return kExitData;
  }
}

// ---------------------------------------------------------------- flags

void add_store(CLI::App& cmd, Flags& f) {
  cmd.add_option("--store", f.store, "Corpus store directory")->envname("REVREC_STORE")->required();
}

void add_out(CLI::App& cmd, Flags& f) {
  cmd.add_option("--out", f.out, "Output file (default: standard output)");
}

void add_embed(CLI::App& cmd, Flags& f) {
  cmd.add_option("--embedder", f.embed.backend, "Embedding backend")->check(CLI::IsMember({"hash", "sidecar"}));
  f.embed.dim_opt = cmd.add_option("--dim", f.embed.dim, "Vector dimension (sidecar: checked against the server)");
  cmd.add_option("--endpoint", f.embed.endpoint, "Sidecar endpoint, host:port or stdio:<command>")
      ->envname("REVREC_ENDPOINT");
  cmd.add_option("--seed", f.embed.seed, "Hash embedder seed");
  cmd.add_option("--cache", f.embed.cache, "Embedding cache file");
  cmd.add_flag("--spell-correct", f.embed.spell_correct, "Correct one-off review misspellings before embedding");
}

void add_threads(CLI::App& cmd, Flags& f) {
  cmd.add_option("--threads", f.match.threads, "Scan threads")->check(CLI::PositiveNumber);
}

// ---------------------------------------------------------------- output

json config_json(const std::string& command, const Flags& f) {
  json j = {{"command", command},
            {"store", f.store},
            {"embedder", f.embed.backend},
            {"dim", f.embed.dim},
            {"endpoint", f.embed.endpoint},
            {"seed", f.embed.seed},
            {"spell_correct", f.embed.spell_correct},
            {"threshold", f.match.threshold},
            {"gt_threshold", f.match.gt_threshold},
            {"dup_threshold", f.match.dup_threshold},
            {"top_n", f.match.top_n},
            {"app", f.app},
            {"reports", f.reports},
            {"reviews", f.reviews},
            {"source_app", f.source_app},
            {"target_app", f.target_app},
            {"pairs", f.pairs},
            {"labels", f.labels},
            {"n", f.n_values},
            {"apps", f.apps},
            {"k", f.k_values},
            {"recs", f.recs},
            {"run_date", f.run_date}};
  return j;
}

std::string manifest_line(const std::string& command, const Flags& f) {
  const auto digest = embedding::sha256(config_json(command, f).dump());
  json m = {{"tool", "revrec"},
            {"version", kToolVersion},
            {"command", command},
            {"config_hash", embedding::to_hex(std::span(digest).first(8))},
            {"seed", f.embed.seed}};
  return json{{"manifest", m}}.dump();
}

/// Destination for command output: --out file or the caller's stream.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) {
    if (path.empty()) {
      stream_ = &fallback;
      return;
    }
    file_.open(path, std::ios::binary | std::ios::trunc);
    if (!file_) throw Error(ErrorCode::kIo, "cannot write " + path);
    stream_ = &file_;
  }

  std::ostream& operator*() { return *stream_; }

  void finish(const std::string& path) {
    stream_->flush();
    if (!*stream_) throw Error(ErrorCode::kIo, "write failed: " + (path.empty() ? std::string("stdout") : path));
  }

 private:
  std::ofstream file_;
  std::ostream* stream_ = nullptr;
};

// ---------------------------------------------------------------- helpers

embedding::EmbedderConfig embedder_config(const Flags& f) {
  embedding::EmbedderConfig config;
  config.backend = f.embed.backend == "sidecar" ? embedding::Backend::kSidecar : embedding::Backend::kHash;
  config.dim = f.embed.dim;
  if (config.backend == embedding::Backend::kSidecar && f.embed.dim_opt->count() == 0) config.dim = 0;
  config.endpoint = f.embed.endpoint;
  config.seed = f.embed.seed;
  if (!f.embed.cache.empty()) config.cache_path = f.embed.cache;
  config.validate();
  return config;
}

matcher::MatchConfig match_config(const Flags& f) {
  matcher::MatchConfig config;
  config.recommend_threshold = f.match.threshold;
  config.ground_truth_threshold = f.match.gt_threshold;
  config.duplicate_threshold = f.match.dup_threshold;
  config.top_n = f.match.top_n;
  config.validate();
  return config;
}

struct Embedded {
  std::unique_ptr<embedding::Embedder> embedder;
  std::unique_ptr<embedding::EmbeddingCache> cache;
  matcher::EmbeddingTable table;
};

Embedded embed_store(const corpus::CorpusStore& store, const Flags& f) {
  const auto config = embedder_config(f);
  Embedded e;
  e.embedder = embedding::make_embedder(config);
  if (config.cache_path) e.cache = std::make_unique<embedding::EmbeddingCache>(*config.cache_path);
  matcher::TableBuildOptions options;
  options.spell_correct = f.embed.spell_correct;
  e.table = matcher::EmbeddingTable::build(store, *e.embedder, e.cache.get(), options);
  return e;
}

void require_app(const corpus::CorpusStore& store, const std::string& app_id) {
  if (!store.has_app(app_id)) throw Error(ErrorCode::kUnknownApp, "app '" + app_id + "' is not in the store");
}

// ---------------------------------------------------------------- commands

int cmd_ingest(const Flags& f, std::ostream& out, std::ostream& err) {
  if (f.reports.empty() && f.reviews.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "ingest needs --reports and/or --reviews");
  }
  const fs::path dir = f.store;
  corpus::CorpusStore store = fs::exists(dir / "manifest.json") ? corpus::load_store(dir) : corpus::CorpusStore{};
  if (!store.has_app(f.app)) {
    if (f.category.empty()) throw Error(ErrorCode::kInvalidArgument, "--category is required to register app '" + f.app + "'");
    corpus::AppDescriptor app{f.app, f.name.empty() ? f.app : f.name, f.category, std::nullopt};
    if (!f.repo.empty()) app.repo = f.repo;
    store.register_app(std::move(app));
  }

  json result = {{"app", f.app}};
  const auto run = [&](const char* kind, const std::string& path, auto ingest) {
    if (path.empty()) return;
    const corpus::IngestStats stats = ingest(store, path, f.app, corpus::IngestOptions{});
    for (const auto& w : stats.warnings) err << "warning: " << w << '\n';
    result[kind] = {{"accepted", stats.accepted},
                    {"malformed", stats.malformed},
                    {"duplicates", stats.duplicates},
                    {"length_rejected", stats.length_rejected}};
    err << fmt::format("{}: {} accepted, {} malformed, {} duplicate, {} outside length gate\n", kind, stats.accepted,
                       stats.malformed, stats.duplicates, stats.length_rejected);
  };
  run("reports", f.reports, corpus::ingest_reports);
  run("reviews", f.reviews, corpus::ingest_reviews);
  corpus::save_store(store, dir);

  Sink sink(f.out, out);
  *sink << manifest_line("ingest", f) << '\n' << result.dump() << '\n';
  sink.finish(f.out);
  err << fmt::format("store {}: {} reports, {} reviews\n", dir.string(), store.report_count(), store.review_count());
  return kExitOk;
}

int cmd_embed(const Flags& f, std::ostream& out, std::ostream& err) {
  const auto store = corpus::load_store(f.store);
  const auto e = embed_store(store, f);
  json result = {{"dim", e.table.dim()},
                 {"backend", e.embedder->backend_id()},
                 {"reports", store.report_count()},
                 {"reviews", store.review_count()},
                 {"unembeddable_titles", e.table.unembeddable_titles()},
                 {"unembeddable_reviews", e.table.unembeddable_reviews()},
                 {"cached", e.cache ? e.cache->size() : 0}};
  Sink sink(f.out, out);
  *sink << manifest_line("embed", f) << '\n' << result.dump() << '\n';
  sink.finish(f.out);
  err << fmt::format("embedded {} titles and {} reviews with {} (dim {})\n",
                     store.report_count() - e.table.unembeddable_titles(),
                     store.review_count() - e.table.unembeddable_reviews(), e.embedder->backend_id(), e.table.dim());
  return kExitOk;
}

int cmd_recommend(const Flags& f, std::ostream& out, std::ostream& err) {
  const auto config = match_config(f);
  const auto store = corpus::load_store(f.store);
  require_app(store, f.source_app);
  require_app(store, f.target_app);
  const auto e = embed_store(store, f);
  const matcher::Matcher matcher(store, e.table, config, matcher::ScanOptions{f.match.threads});
  const auto batch = matcher.recommend_all(f.source_app, f.target_app);

  Sink sink(f.out, out);
  *sink << manifest_line("recommend", f) << '\n';
  std::size_t decided = 0;
  std::size_t duplicates = 0;
  for (const auto& rec : batch.recommendations) {
    *sink << matcher::to_jsonl(rec) << '\n';
    if (rec.decided) ++decided;
    if (rec.duplicate_of) ++duplicates;
  }
  sink.finish(f.out);
  err << fmt::format("{} -> {}: {} reports, {} recommended, {} already tracked, {} undecided, {} skipped\n",
                     f.source_app, f.target_app, batch.recommendations.size(), decided, duplicates,
                     batch.recommendations.size() - decided - duplicates, batch.skipped);
  return kExitOk;
}

int cmd_ground_truth(const Flags& f, std::ostream& out, std::ostream& err) {
  const auto config = match_config(f);
  const auto store = corpus::load_store(f.store);
  require_app(store, f.source_app);
  require_app(store, f.target_app);
  const auto e = embed_store(store, f);
  const matcher::Matcher matcher(store, e.table, config, matcher::ScanOptions{f.match.threads});
  const auto gt = matcher.build_ground_truth(store.reports(f.source_app), store.reports(f.target_app));

  Sink sink(f.out, out);
  *sink << manifest_line("ground-truth", f) << '\n';
  for (const auto& pair : gt.pairs) *sink << matcher::to_jsonl(pair) << '\n';
  sink.finish(f.out);
  err << fmt::format("{} x {}: {} ground-truth pairs at >= {}, {} reports skipped\n", f.source_app, f.target_app,
                     gt.pairs.size(), config.ground_truth_threshold, gt.skipped);
  return kExitOk;
}

int cmd_eval(const Flags& f, std::ostream& out, std::ostream& err) {
  const auto config = match_config(f);
  const auto store = corpus::load_store(f.store);
  std::vector<matcher::GroundTruthPair> pairs;
  for (const auto& line : matcher::read_jsonl_records(f.pairs)) {
    try {
      pairs.push_back(matcher::ground_truth_pair_from_json(line));
    } catch (const Error& e) {
      throw Error(e.code(), f.pairs + ": record " + std::to_string(pairs.size() + 1) + ": " + e.what());
    }
  }
  const auto labels = metrics::read_labels(f.labels);
  const auto e = embed_store(store, f);
  const auto result = metrics::evaluate_ground_truth(pairs, store, e.table, config, labels, f.n_values,
                                                     metrics::EvalOptions{f.match.threads});

  Sink sink(f.out, out);
  *sink << manifest_line("eval", f) << '\n' << json::parse(metrics::to_json(result.report)).dump() << '\n';
  sink.finish(f.out);
  err << metrics::format_table(result.report);
  return kExitOk;
}

int cmd_overlap(const Flags& f, std::ostream& out, std::ostream& err) {
  const auto store = corpus::load_store(f.store);
  std::vector<std::string> apps = f.apps;
  if (apps.empty()) {
    for (const auto& [id, _] : store.apps()) apps.push_back(id);
  }
  for (const auto& app : apps) require_app(store, app);
  const auto matrix = metrics::overlap_matrix(store, apps, f.k_values);

  Sink sink(f.out, out);
  *sink << "# " << manifest_line("overlap", f) << '\n' << metrics::to_csv(matrix);
  sink.finish(f.out);
  err << fmt::format("overlap of {} apps at {} K values\n", apps.size(), f.k_values.size());
  return kExitOk;
}

int cmd_stats(const Flags& f, std::ostream& out, std::ostream& err) {
  const auto store = corpus::load_store(f.store);
  std::vector<matcher::Recommendation> recs;
  for (const auto& line : matcher::read_jsonl_records(f.recs)) {
    try {
      recs.push_back(matcher::recommendation_from_json(line));
    } catch (const Error& e) {
      throw Error(e.code(), f.recs + ": record " + std::to_string(recs.size() + 1) + ": " + e.what());
    }
  }
  Timestamp run_date;
  if (f.run_date.empty()) {
    run_date = std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
  } else {
    const auto parsed = parse_rfc3339(f.run_date);
    if (!parsed) throw Error(ErrorCode::kInvalidArgument, "--run-date '" + f.run_date + "' is not RFC 3339");
    run_date = *parsed;
  }
  const auto stats = matcher::lead_time_stats(recs, store, run_date);

  json items = json::array();
  for (const auto& item : stats.items) {
    items.push_back({{"source_report", item.source_report}, {"review_id", item.review_id}, {"days", item.days}});
  }
  json result = {{"run_date", format_rfc3339(run_date)},
                 {"decided", stats.items.size()},
                 {"mean_days", stats.mean_days},
                 {"median_days", stats.median_days},
                 {"items", items}};
  Sink sink(f.out, out);
  *sink << manifest_line("stats", f) << '\n' << result.dump() << '\n';
  sink.finish(f.out);
  err << fmt::format("{} decided recommendations, lead time mean {:.1f} days, median {:.1f} days\n",
                     stats.items.size(), stats.mean_days, stats.median_days);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Flags f;
  CLI::App app{"revrec: recommend bug reports across apps by matching them against user reviews", "revrec"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  std::function<int(std::ostream&, std::ostream&)> action;
  const auto on = [&](CLI::App* cmd, int (*fn)(const Flags&, std::ostream&, std::ostream&)) {
    cmd->callback([&action, &f, fn] { action = [&f, fn](std::ostream& o, std::ostream& e) { return fn(f, o, e); }; });
  };

  auto* ingest = app.add_subcommand("ingest", "Load bug reports and/or reviews of one app into the store");
  add_store(*ingest, f);
  ingest->add_option("--app", f.app, "App id")->required();
  ingest->add_option("--name", f.name, "Display name (first registration only)");
  ingest->add_option("--category", f.category, "App category (first registration only)");
  ingest->add_option("--repo", f.repo, "Issue tracker URL (first registration only)");
  ingest->add_option("--reports", f.reports, "Bug report JSON Lines file")->check(CLI::ExistingFile);
  ingest->add_option("--reviews", f.reviews, "Review JSON Lines file")->check(CLI::ExistingFile);
  add_out(*ingest, f);
  on(ingest, cmd_ingest);

  auto* embed = app.add_subcommand("embed", "Embed every title and review in the store, filling the cache");
  add_store(*embed, f);
  add_embed(*embed, f);
  add_out(*embed, f);
  on(embed, cmd_embed);

  auto* recommend = app.add_subcommand("recommend", "Match source-app bug reports against target-app reviews");
  add_store(*recommend, f);
  recommend->add_option("--source-app", f.source_app, "App whose bug reports are transferred")->required();
  recommend->add_option("--target-app", f.target_app, "App whose reviews are searched")->required();
  recommend->add_option("--threshold", f.match.threshold, "Minimum review similarity");
  recommend->add_option("--dup-threshold", f.match.dup_threshold, "Similarity at which the target already tracks the bug");
  recommend->add_option("--top-n", f.match.top_n, "Reviews kept per report")->check(CLI::PositiveNumber);
  add_threads(*recommend, f);
  add_embed(*recommend, f);
  add_out(*recommend, f);
  on(recommend, cmd_recommend);

  auto* ground_truth = app.add_subcommand("ground-truth", "Pair equivalent bug reports of two apps");
  add_store(*ground_truth, f);
  ground_truth->add_option("--source-app", f.source_app, "App A")->required();
  ground_truth->add_option("--target-app", f.target_app, "App B")->required();
  ground_truth->add_option("--gt-threshold", f.match.gt_threshold, "Minimum title similarity for a pair");
  add_threads(*ground_truth, f);
  add_embed(*ground_truth, f);
  add_out(*ground_truth, f);
  on(ground_truth, cmd_ground_truth);

  auto* eval = app.add_subcommand("eval", "Acc@N and MRR@N of review ranking over ground-truth pairs");
  add_store(*eval, f);
  eval->add_option("--pairs", f.pairs, "Ground-truth pair JSON Lines")->required()->check(CLI::ExistingFile);
  eval->add_option("--labels", f.labels, "Relevance label JSON Lines")->required()->check(CLI::ExistingFile);
  eval->add_option("--n", f.n_values, "Cutoff N (repeatable)")->allow_extra_args(false)->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)->check(CLI::PositiveNumber);
  add_threads(*eval, f);
  add_embed(*eval, f);
  add_out(*eval, f);
  on(eval, cmd_eval);

  auto* overlap = app.add_subcommand("overlap", "Top-K frequent-word overlap between apps");
  add_store(*overlap, f);
  overlap->add_option("--app", f.apps, "App id (repeatable; default all apps)")->allow_extra_args(false)->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  overlap->add_option("--k", f.k_values, "Top-K size (repeatable)")->allow_extra_args(false)->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)->check(CLI::PositiveNumber);
  add_out(*overlap, f);
  on(overlap, cmd_overlap);

  auto* stats = app.add_subcommand("stats", "Lead time of decided recommendations");
  add_store(*stats, f);
  stats->add_option("--recs", f.recs, "Recommendation JSON Lines from `recommend`")->required()->check(CLI::ExistingFile);
  stats->add_option("--run-date", f.run_date, "Recommendation run date, RFC 3339 (default: now)");
  add_out(*stats, f);
  on(stats, cmd_stats);

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    return action(out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace revrec::cli
