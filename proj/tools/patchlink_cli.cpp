/*
 * Copyright 2026 The patchlink Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// patchlink command-line tool: corpus fetch, training, evaluation, offline
// ranking, and the local inference service.

#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "patchlink/classifier.hpp"
#include "patchlink/core_model.hpp"
#include "patchlink/embedding.hpp"
#include "patchlink/eval.hpp"
#include "patchlink/gerrit_client.hpp"
#include "patchlink/logging.hpp"
#include "patchlink/pipeline.hpp"
#include "patchlink/service.hpp"

namespace pl = patchlink;

namespace {

std::vector<pl::ChangeRecord> read_changes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw pl::IoError("cannot open '" + path + "'");
  return pl::parse_changes_file(in);
}

std::vector<pl::LinkLabel> read_links(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw pl::IoError("cannot open '" + path + "'");
  return pl::parse_links_file(in);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw pl::IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw pl::IoError("write failed for '" + path + "'");
}

pl::WindowMode mode_or_throw(const std::string& s) {
  auto m = pl::parse_window_mode(s);
  if (!m) throw pl::InvalidArgument("window mode must be 'symmetric' or 'lookback'");
  return *m;
}

// Accepts `2024-03-01T12:00:00Z` or a bare date `2024-03-01`.
pl::Timestamp parse_when(const std::string& s) {
  if (auto ts = pl::parse_iso8601(s)) return *ts;
  if (auto ts = pl::parse_iso8601(s + "T00:00:00Z")) return *ts;
  throw pl::InvalidArgument("cannot parse time '" + s + "'");
}

pl::Timestamp default_trained_at() {
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"))
    return pl::Timestamp{std::chrono::seconds{std::strtoll(epoch, nullptr, 10)}};
  return std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
}

struct GerritFlags {
  std::string url;
  std::string user;
  std::string password;
  int timeout_s = 30;

  void add_to(CLI::App* app, bool required) {
    auto* u = app->add_option("--gerrit-url", url, "Gerrit base URL")->envname("GERRIT_URL");
    if (required) u->required();
    app->add_option("--gerrit-user", user, "Gerrit username")->envname("GERRIT_USER");
    app->add_option("--gerrit-http-password", password, "Gerrit HTTP password")
        ->envname("GERRIT_HTTP_PASSWORD");
    app->add_option("--gerrit-timeout", timeout_s, "request timeout in seconds")->check(CLI::PositiveNumber);
  }

  pl::gerrit::GerritConfig config() const {
    pl::gerrit::GerritConfig cfg;
    cfg.base_url = url;
    if (!user.empty()) cfg.username = user;
    if (!password.empty()) cfg.http_password = password;
    cfg.timeout = std::chrono::seconds{timeout_s};
    return cfg;
  }
};

pl::service::Server* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"patchlink: linked-change detection for Gerrit code review"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  // train
  auto* train = app.add_subcommand("train", "train a forest from a labeled corpus");
  std::string changes_path, links_path, out_path, model_path, embed_url;
  int window_days = pl::WindowConfig::kDefaultDays;
  std::string window_mode = "symmetric";
  std::size_t negatives = 5, n_trees = 100, max_depth = 16;
  std::uint64_t seed = 42;
  bool cross_project = false;
  std::string trained_at;
  train->add_option("--changes", changes_path, "changes.jsonl")->required();
  train->add_option("--links", links_path, "links.jsonl")->required();
  train->add_option("--out", out_path, "model file to write")->required();
  train->add_option("--window-days", window_days)->check(CLI::Range(1, 365));
  train->add_option("--window-mode", window_mode);
  train->add_option("--negatives-per-positive", negatives)->check(CLI::PositiveNumber);
  train->add_option("--seed", seed);
  train->add_option("--n-trees", n_trees)->check(CLI::PositiveNumber);
  train->add_option("--max-depth", max_depth)->check(CLI::PositiveNumber);
  train->add_option("--trained-at", trained_at, "ISO-8601 stamp (default: SOURCE_DATE_EPOCH or now)");
  train->add_flag("--cross-project", cross_project);
  train->add_option("--embed-url", embed_url)->envname("EMBED_URL");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Recall@K / MRR against baselines");
  std::vector<int> windows{2, 7, 14, 30};
  std::vector<std::size_t> ks{1, 2, 4, 6, 8, 10};
  std::vector<std::string> methods{"learned", "combined", "text_only", "file_only"};
  std::string report_path;
  evaluate->add_option("--changes", changes_path)->required();
  evaluate->add_option("--links", links_path)->required();
  evaluate->add_option("--model", model_path, "required for the learned method");
  evaluate->add_option("--windows", windows)->delimiter(',');
  evaluate->add_option("--k", ks)->delimiter(',');
  evaluate->add_option("--methods", methods)->delimiter(',');
  evaluate->add_option("--seed", seed, "accepted for symmetry with train; evaluation is deterministic");
  evaluate->add_option("--out", report_path, "JSON-Lines report");
  evaluate->add_option("--window-mode", window_mode);
  evaluate->add_flag("--cross-project", cross_project);
  evaluate->add_option("--embed-url", embed_url)->envname("EMBED_URL");

  // fetch
  auto* fetch = app.add_subcommand("fetch", "download a project's changes into changes.jsonl");
  GerritFlags fetch_gerrit;
  fetch_gerrit.add_to(fetch, true);
  std::string project, since, until;
  std::size_t limit = 500;
  fetch->add_option("--project", project)->required();
  fetch->add_option("--since", since)->required();
  fetch->add_option("--until", until)->required();
  fetch->add_option("--limit", limit)->check(CLI::PositiveNumber);
  fetch->add_option("--out", out_path)->required();

  // predict
  auto* predict = app.add_subcommand("predict", "rank likely linked changes offline");
  std::string target_key;
  std::size_t top_k = pl::RankRequest::kDefaultTopK;
  bool as_json = false;
  std::string predict_mode = "lookback";
  predict->add_option("--changes", changes_path)->required();
  predict->add_option("--target", target_key)->required();
  predict->add_option("--model", model_path)->required();
  predict->add_option("--window-days", window_days)->check(CLI::Range(1, 365));
  predict->add_option("--window-mode", predict_mode);
  predict->add_option("--top-k", top_k)->check(CLI::PositiveNumber);
  predict->add_flag("--cross-project", cross_project);
  predict->add_flag("--json", as_json, "emit JSON instead of a table");
  predict->add_option("--embed-url", embed_url)->envname("EMBED_URL");

  // serve
  auto* serve = app.add_subcommand("serve", "run the local inference service");
  GerritFlags serve_gerrit;
  serve_gerrit.add_to(serve, false);
  std::string host = "127.0.0.1";
  int port = 8787;
  std::vector<std::string> origins;
  serve->add_option("--host", host, "listen address (loopback by default)");
  serve->add_option("--port", port)->check(CLI::Range(1, 65535));
  serve->add_option("--model", model_path)->required();
  serve->add_option("--embed-url", embed_url)->envname("EMBED_URL");
  serve->add_option("--allowed-origin", origins, "origin allowed to call the API (repeatable)");
  serve->add_option("--window-days", window_days, "default window")->check(CLI::Range(1, 365));
  serve->add_option("--top-k", top_k, "default top-K")->check(CLI::PositiveNumber);
  serve->add_flag("--cross-project", cross_project);

  CLI11_PARSE(app, argc, argv);
  if (verbose) pl::log::set_level(pl::log::Level::debug);
  const auto scope = cross_project ? pl::ProjectScope::cross_project : pl::ProjectScope::same_project;

  try {
    if (*train) {
      const auto changes = read_changes(changes_path);
      const auto links = read_links(links_path);
      auto provider = pl::make_provider(embed_url);
      pl::EmbeddingCache cache;
      pl::eval::PairSamplingConfig pairs;
      pairs.window = {window_days, mode_or_throw(window_mode)};
      pairs.negatives_per_positive = negatives;
      pairs.seed = seed;
      pairs.scope = scope;
      const auto set = pl::eval::build_training_pairs(changes, links, pairs, *provider, cache);
      pl::TrainConfig tc;
      tc.n_trees = n_trees;
      tc.max_depth = max_depth;
      tc.seed = seed;
      const auto stamp = trained_at.empty() ? default_trained_at() : parse_when(trained_at);
      const auto model = pl::train(set.samples, tc, stamp);
      pl::save_model(model, out_path);
      std::printf("trained %zu trees on %zu positives / %zu negatives "
                  "(%zu links outside window, %zu anchors without negatives) -> %s\n",
                  model.n_trees(), set.n_positive, set.n_negative, set.n_out_of_window,
                  set.n_no_negatives, out_path.c_str());
    } else if (*evaluate) {
      const auto changes = read_changes(changes_path);
      const auto links = read_links(links_path);
      pl::eval::EvalConfig cfg;
      cfg.windows = windows;
      cfg.ks = ks;
      cfg.methods.clear();
      for (const auto& m : methods) cfg.methods.push_back(pl::eval::parse_method(m));
      cfg.window_mode = mode_or_throw(window_mode);
      cfg.scope = scope;
      std::optional<pl::ForestModel> model;
      if (!model_path.empty()) model = pl::load_model(model_path);
      auto provider = pl::make_provider(embed_url);
      pl::EmbeddingCache cache;
      const auto report =
          pl::eval::run_evaluation(changes, links, model ? &*model : nullptr, *provider, cache, cfg);
      std::fputs(pl::eval::format_tables(report).c_str(), stdout);
      if (!report_path.empty()) write_text(report_path, pl::eval::to_jsonl(report));
    } else if (*fetch) {
      pl::gerrit::GerritClient client(fetch_gerrit.config());
      const auto changes = client.query_changes(project, parse_when(since), parse_when(until), limit);
      std::ofstream out(out_path, std::ios::trunc);
      if (!out) throw pl::IoError("cannot open '" + out_path + "' for writing");
      pl::write_changes_file(out, changes);
      std::printf("wrote %zu changes to %s\n", changes.size(), out_path.c_str());
    } else if (*predict) {
      const auto changes = read_changes(changes_path);
      const auto model = pl::load_model(model_path);
      auto provider = pl::make_provider(embed_url);
      pl::EmbeddingCache cache;
      pl::RankRequest req;
      auto it = std::find_if(changes.begin(), changes.end(),
                             [&](const pl::ChangeRecord& c) { return c.change_key == target_key; });
      if (it == changes.end()) throw pl::InvalidArgument("target '" + target_key + "' not in corpus");
      req.target = *it;
      req.pool = changes;
      req.window = {window_days, mode_or_throw(predict_mode)};
      req.top_k = top_k;
      req.scope = scope;
      const auto preds = pl::rank_candidates(req, model, *provider, cache);
      if (as_json) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& p : preds) arr.push_back(pl::to_json(p));
        std::cout << nlohmann::json{{"target", req.target.change_key}, {"predictions", arr}}.dump(2) << '\n';
      } else {
        if (preds.empty()) std::cout << "no related changes found in window\n";
        for (const auto& p : preds)
          std::printf("%2zu  %-12s %3d%% match  %s\n", p.rank, p.change_key.c_str(), p.confidence_pct(),
                      p.subject.c_str());
      }
    } else if (*serve) {
      pl::service::ServiceConfig cfg;
      cfg.host = host;
      cfg.port = port;
      cfg.model_path = model_path;
      if (!serve_gerrit.url.empty()) cfg.gerrit = serve_gerrit.config();
      cfg.embed_url = embed_url;
      cfg.allowed_origins = origins;
      cfg.default_window_days = window_days;
      cfg.default_top_k = top_k;
      cfg.scope = scope;
      pl::service::Server server(pl::service::make_engine(cfg));
      if (!server.bind(host, port)) throw pl::IoError("cannot bind " + host + ":" + std::to_string(port));
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      pl::log::info("listening on http://" + host + ":" + std::to_string(port));
      server.listen_after_bind();
      g_server = nullptr;
    }
  } catch (const pl::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
