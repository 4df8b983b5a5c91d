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

#pragma once

// Local HTTP inference service:
//   GET  /health
//   POST /api/v1/predict   {change_id, project?, window_days?, top_k?, window_mode?}
//   POST /api/v1/score     {a: change, b: change}

#include <algorithm>
#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "patchlink/classifier.hpp"
#include "patchlink/core_model.hpp"
#include "patchlink/embedding.hpp"
#include "patchlink/gerrit_client.hpp"
#include "patchlink/logging.hpp"
#include "patchlink/pipeline.hpp"

namespace patchlink::service {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8787;
  std::string model_path;
  std::optional<gerrit::GerritConfig> gerrit;
  std::string embed_url;  // empty selects the fallback embedder
  std::vector<std::string> allowed_origins;
  int default_window_days = WindowConfig::kDefaultDays;
  std::size_t default_top_k = RankRequest::kDefaultTopK;
  WindowMode default_window_mode = WindowMode::lookback;
  ProjectScope scope = ProjectScope::same_project;
  std::size_t max_candidates = 500;
};

struct Reply {
  int status = 200;
  nlohmann::json body;
};

namespace detail {

inline Reply error_reply(int status, const std::string& message) {
  return Reply{status, {{"error", message}}};
}

}  // namespace detail

/// Request handling, independent of the transport.
class Engine {
 public:
  Engine(ServiceConfig cfg, ForestModel model, std::unique_ptr<EmbeddingProvider> provider,
         std::unique_ptr<gerrit::GerritClient> gerrit)
      : cfg_(std::move(cfg)),
        model_(std::move(model)),
        provider_(std::move(provider)),
        gerrit_(std::move(gerrit)) {
    if (!WindowConfig::valid_days(cfg_.default_window_days) || cfg_.default_top_k == 0)
      throw InvalidArgument("invalid service defaults");
  }

  const ServiceConfig& config() const { return cfg_; }
  const ForestModel& model() const { return model_; }
  const EmbeddingProvider& provider() const { return *provider_; }

  Reply health() const {
    return Reply{200,
                 {{"status", "ok"},
                  {"model_version", model_.version},
                  {"n_trees", model_.n_trees()},
                  {"provider_name", provider_->name()}}};
  }

  Reply predict(const std::string& body) {
    const auto started = std::chrono::steady_clock::now();
    nlohmann::json req;
    try {
      req = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
      return detail::error_reply(400, "request body is not valid JSON");
    }
    if (!req.is_object()) return detail::error_reply(400, "request body must be a JSON object");

    std::string change_id;
    if (auto it = req.find("change_id"); it != req.end() && it->is_string())
      change_id = it->get<std::string>();
    else if (it != req.end() && it->is_number_integer())
      change_id = std::to_string(it->get<std::int64_t>());
    if (change_id.empty()) return detail::error_reply(400, "change_id is required");

    std::optional<std::string> project;
    if (auto it = req.find("project"); it != req.end() && !it->is_null()) {
      if (!it->is_string()) return detail::error_reply(400, "project must be a string");
      project = it->get<std::string>();
    }

    WindowConfig window{cfg_.default_window_days, cfg_.default_window_mode};
    if (auto it = req.find("window_days"); it != req.end() && !it->is_null()) {
      if (!it->is_number_integer() || !WindowConfig::valid_days(it->get<std::int64_t>()))
        return detail::error_reply(400, "window_days must be an integer in 1..365");
      window.days = it->get<int>();
    }
    if (auto it = req.find("window_mode"); it != req.end() && !it->is_null()) {
      const auto mode = it->is_string() ? parse_window_mode(it->get<std::string>()) : std::nullopt;
      if (!mode) return detail::error_reply(400, "window_mode must be 'lookback' or 'symmetric'");
      window.mode = *mode;
    }
    std::size_t top_k = cfg_.default_top_k;
    if (auto it = req.find("top_k"); it != req.end() && !it->is_null()) {
      if (!it->is_number_integer() || it->get<std::int64_t>() < 1)
        return detail::error_reply(400, "top_k must be a positive integer");
      top_k = it->get<std::size_t>();
    }
    if (!gerrit_) return detail::error_reply(503, "no Gerrit instance configured");

    RankRequest rank;
    rank.window = window;
    rank.top_k = top_k;
    rank.scope = cfg_.scope;
    try {
      rank.target = gerrit_->get_change(change_id);
      if (project && *project != rank.target.project)
        return detail::error_reply(400, "change " + change_id + " belongs to project '" +
                                            rank.target.project + "', not '" + *project + "'");
      // Gerrit's after:/before: operators filter on the update time, which is
      // never earlier than creation; select_candidates then applies the window
      // to creation times.
      const Timestamp t = rank.target.created_at;
      const Timestamp after = t - window.half_width();
      Timestamp before = window.mode == WindowMode::symmetric ? t + window.half_width() : t;
      before = std::max(before, std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
      const std::string pool_project =
          cfg_.scope == ProjectScope::same_project ? rank.target.project : std::string();
      rank.pool = gerrit_->query_changes(pool_project, after, before, cfg_.max_candidates);
    } catch (const NotFound& e) {
      return detail::error_reply(404, e.what());
    } catch (const GerritError& e) {
      return detail::error_reply(502, e.what());
    } catch (const BadTimestamp& e) {
      return detail::error_reply(502, std::string("gerrit: ") + e.what());
    }

    std::vector<RankedPrediction> predictions;
    try {
      predictions = rank_candidates(rank, model_, *provider_, cache_);
    } catch (const ProviderFailure& e) {
      return detail::error_reply(502, e.what());
    }

    nlohmann::json preds = nlohmann::json::array();
    for (const auto& p : predictions) preds.push_back(to_json(p));
    const double elapsed_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    return Reply{200,
                 {{"target", to_json(rank.target)},
                  {"predictions", std::move(preds)},
                  {"window_days", window.days},
                  {"window_mode", to_string(window.mode)},
                  {"top_k", top_k},
                  {"timing_ms", elapsed_ms}}};
  }

  Reply score(const std::string& body) {
    nlohmann::json req;
    try {
      req = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
      return detail::error_reply(400, "request body is not valid JSON");
    }
    if (!req.is_object() || !req.contains("a") || !req.contains("b"))
      return detail::error_reply(400, "expected an object with 'a' and 'b' changes");
    ChangeRecord a, b;
    try {
      a = change_from_json(req["a"]);
      b = change_from_json(req["b"]);
    } catch (const Error& e) {
      return detail::error_reply(400, e.what());
    }
    try {
      const auto [s, fv] = score_pair(a, b, model_, *provider_, cache_);
      return Reply{200,
                   {{"score", s},
                    {"confidence_pct", static_cast<int>(std::lround(100.0 * s))},
                    {"features", to_json(fv)}}};
    } catch (const ProviderFailure& e) {
      return detail::error_reply(502, e.what());
    }
  }

  bool origin_allowed(const std::string& origin) const {
    return std::find(cfg_.allowed_origins.begin(), cfg_.allowed_origins.end(), origin) !=
           cfg_.allowed_origins.end();
  }

 private:
  ServiceConfig cfg_;
  ForestModel model_;
  std::unique_ptr<EmbeddingProvider> provider_;
  std::unique_ptr<gerrit::GerritClient> gerrit_;
  EmbeddingCache cache_;
};

/// HTTP front end for an Engine.
class Server {
 public:
  explicit Server(std::unique_ptr<Engine> engine) : engine_(std::move(engine)) {
    auto send = [](httplib::Response& res, const Reply& r) {
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    http_.Get("/health", [this, send](const httplib::Request&, httplib::Response& res) {
      send(res, engine_->health());
    });
    http_.Post("/api/v1/predict", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, engine_->predict(req.body));
    });
    http_.Post("/api/v1/score", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, engine_->score(req.body));
    });
    http_.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    http_.set_exception_handler([send](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string what = "internal error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      send(res, detail::error_reply(500, what));
    });
    http_.set_post_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      const std::string origin = req.get_header_value("Origin");
      if (!origin.empty() && engine_->origin_allowed(origin)) {
        res.set_header("Access-Control-Allow-Origin", origin);
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Vary", "Origin");
      }
    });
    http_.set_logger([](const httplib::Request& req, const httplib::Response& res) {
      log::info(req.method + " " + req.path + " -> " + std::to_string(res.status));
    });
  }

  Engine& engine() { return *engine_; }

  /// Binds to `host` on an ephemeral port and returns it, or -1.
  int bind_to_any_port(const std::string& host) { return http_.bind_to_any_port(host); }
  bool bind(const std::string& host, int port) { return http_.bind_to_port(host, port); }
  /// Blocks serving requests until stop().
  bool listen_after_bind() { return http_.listen_after_bind(); }
  void stop() { http_.stop(); }
  void wait_until_ready() { http_.wait_until_ready(); }

 private:
  std::unique_ptr<Engine> engine_;
  httplib::Server http_;
};

/// Loads the model and wires the configured provider and Gerrit client.
/// Throws when the model cannot be loaded; the service never starts without one.
inline std::unique_ptr<Engine> make_engine(const ServiceConfig& cfg) {
  ForestModel model = load_model(cfg.model_path);
  auto provider = make_provider(cfg.embed_url);
  std::unique_ptr<gerrit::GerritClient> client;
  if (cfg.gerrit) client = std::make_unique<gerrit::GerritClient>(*cfg.gerrit);
  return std::make_unique<Engine>(cfg, std::move(model), std::move(provider), std::move(client));
}

}  // namespace patchlink::service
