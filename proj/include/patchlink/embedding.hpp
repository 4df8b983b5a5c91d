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

// Sentence-embedding providers and cosine similarity.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "patchlink/core_model.hpp"
#include "patchlink/error.hpp"

namespace patchlink {

using EmbeddingVector = std::vector<double>;

/// Cosine of the angle between `u` and `v`, clamped to [-1, 1].
/// A zero vector carries no evidence and yields 0.
inline double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw DimensionMismatch(u.size(), v.size());
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

/// Deterministic text -> vector mapping. Implementations must return the same
/// vector for the same text and tolerate concurrent calls.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string name() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual EmbeddingVector embed(std::string_view text) const = 0;
};

inline constexpr std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Lowercased runs of ASCII letters and digits. Bytes >= 0x80 are kept as
/// token characters so UTF-8 words survive intact.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if ((c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || c >= 0x80) {
      cur.push_back(static_cast<char>(c));
    } else if (c >= 'A' && c <= 'Z') {
      cur.push_back(static_cast<char>(c - 'A' + 'a'));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// Hashed bag-of-tokens embedding, L2-normalized. Text without tokens maps to
/// the zero vector.
inline EmbeddingVector fallback_embed(std::string_view text, std::size_t dimension = 256) {
  if (dimension == 0) throw InvalidArgument("embedding dimension must be positive");
  EmbeddingVector v(dimension, 0.0);
  for (const auto& tok : tokenize(text)) v[fnv1a64(tok) % dimension] += 1.0;
  double norm2 = 0.0;
  for (double x : v) norm2 += x * x;
  if (norm2 > 0.0) {
    const double norm = std::sqrt(norm2);
    for (double& x : v) x /= norm;
  }
  return v;
}

class FallbackEmbedder final : public EmbeddingProvider {
 public:
  explicit FallbackEmbedder(std::size_t dimension = 256) : dimension_(dimension) {
    if (dimension_ == 0) throw InvalidArgument("embedding dimension must be positive");
  }
  std::string name() const override { return "fallback-fnv1a-" + std::to_string(dimension_); }
  std::size_t dimension() const override { return dimension_; }
  EmbeddingVector embed(std::string_view text) const override {
    return fallback_embed(text, dimension_);
  }

 private:
  std::size_t dimension_;
};

/// Client for an external embedding endpoint:
///   POST {base}/embed  {"texts":[...]}  ->  {"vectors":[[...],...],"dimension":D}
/// Text is sent whole; any truncation is the endpoint's business.
class HttpEmbedder final : public EmbeddingProvider {
 public:
  explicit HttpEmbedder(std::string base_url, std::chrono::seconds timeout = std::chrono::seconds{30})
      : base_url_(std::move(base_url)), timeout_(timeout) {
    while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
    // Probing once fixes the dimension and fails fast on a dead endpoint.
    dimension_ = request({std::string("\n")}).front().size();
    if (dimension_ == 0) throw ProviderFailure("endpoint reported dimension 0");
  }

  std::string name() const override { return "http:" + base_url_; }
  std::size_t dimension() const override { return dimension_; }

  EmbeddingVector embed(std::string_view text) const override {
    auto vectors = request({std::string(text)});
    if (vectors.front().size() != dimension_)
      throw ProviderFailure("inconsistent vector dimension from " + base_url_);
    return std::move(vectors.front());
  }

  std::vector<EmbeddingVector> request(const std::vector<std::string>& texts) const {
    httplib::Client client(base_url_);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    const nlohmann::json body{{"texts", texts}};
    auto res = client.Post("/embed", body.dump(), "application/json");
    if (!res) throw ProviderFailure(base_url_ + ": " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw ProviderFailure(base_url_ + ": HTTP " + std::to_string(res->status));
    try {
      const auto doc = nlohmann::json::parse(res->body);
      auto vectors = doc.at("vectors").get<std::vector<EmbeddingVector>>();
      if (vectors.size() != texts.size())
        throw ProviderFailure("expected " + std::to_string(texts.size()) + " vectors, got " +
                              std::to_string(vectors.size()));
      for (const auto& v : vectors) {
        if (doc.contains("dimension") && v.size() != doc["dimension"].get<std::size_t>())
          throw ProviderFailure("vector length disagrees with reported dimension");
        if (!std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); }))
          throw ProviderFailure("non-finite value in embedding");
      }
      return vectors;
    } catch (const nlohmann::json::exception& e) {
      throw ProviderFailure(std::string("bad response body: ") + e.what());
    }
  }

 private:
  std::string base_url_;
  std::chrono::seconds timeout_;
  std::size_t dimension_ = 0;
};

/// Builds the configured provider: the HTTP endpoint when `embed_url` is
/// non-empty, otherwise the hashed fallback.
inline std::unique_ptr<EmbeddingProvider> make_provider(const std::string& embed_url) {
  if (embed_url.empty()) return std::make_unique<FallbackEmbedder>();
  return std::make_unique<HttpEmbedder>(embed_url);
}

inline EmbeddingVector embed_change(const EmbeddingProvider& provider, const ChangeRecord& change) {
  EmbeddingVector v = provider.embed(change.text());
  if (v.size() != provider.dimension())
    throw ProviderFailure(provider.name() + " returned " + std::to_string(v.size()) +
                          " values, expected " + std::to_string(provider.dimension()));
  return v;
}

/// Text-keyed embedding cache, shared across requests.
class EmbeddingCache {
 public:
  std::shared_ptr<const EmbeddingVector> find(const std::string& key) const {
    std::shared_lock lock(mu_);
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : it->second;
  }

  std::shared_ptr<const EmbeddingVector> insert(const std::string& key, EmbeddingVector v) {
    std::unique_lock lock(mu_);
    auto [it, inserted] =
        entries_.try_emplace(key, std::make_shared<const EmbeddingVector>(std::move(v)));
    return it->second;
  }

  void clear() {
    std::unique_lock lock(mu_);
    entries_.clear();
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
  }

  static std::string key_for(const EmbeddingProvider& provider, const std::string& text) {
    std::string key = provider.name();
    key.push_back('\0');
    key += text;
    return key;
  }

 private:
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, std::shared_ptr<const EmbeddingVector>> entries_;
};

inline std::shared_ptr<const EmbeddingVector> cached_embed(const EmbeddingProvider& provider,
                                                           const ChangeRecord& change,
                                                           EmbeddingCache& cache) {
  const std::string key = EmbeddingCache::key_for(provider, change.text());
  if (auto hit = cache.find(key)) return hit;
  return cache.insert(key, embed_change(provider, change));
}

}  // namespace patchlink
