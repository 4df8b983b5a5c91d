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

// Candidate selection, scoring and top-K ranking for one target change.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "patchlink/classifier.hpp"
#include "patchlink/core_model.hpp"
#include "patchlink/embedding.hpp"
#include "patchlink/features.hpp"

namespace patchlink {

enum class ProjectScope { same_project, cross_project };

/// Changes from `pool` inside the window around `target`, nearest first
/// (ties by change_key). The target itself and repeated keys are dropped.
inline CandidateSet select_candidates(const ChangeRecord& target,
                                      const std::vector<ChangeRecord>& pool,
                                      const WindowConfig& window,
                                      ProjectScope scope = ProjectScope::same_project) {
  CandidateSet out{target, {}, window};
  std::unordered_set<std::string_view> seen;
  for (const auto& c : pool) {
    if (c.change_key == target.change_key) continue;
    if (scope == ProjectScope::same_project && c.project != target.project) continue;
    if (!window.contains(target.created_at, c.created_at)) continue;
    if (!seen.insert(c.change_key).second) continue;
    out.candidates.push_back(c);
  }
  const auto gap = [&](const ChangeRecord& c) {
    const auto d = c.created_at - target.created_at;
    return d < std::chrono::seconds{0} ? -d : d;
  };
  std::sort(out.candidates.begin(), out.candidates.end(),
            [&](const ChangeRecord& x, const ChangeRecord& y) {
              const auto gx = gap(x), gy = gap(y);
              if (gx != gy) return gx < gy;
              return x.change_key < y.change_key;
            });
  return out;
}

struct RankedPrediction {
  std::string change_key;
  std::string subject;
  std::optional<std::string> url;
  double score = 0.0;
  std::size_t rank = 0;  // 1 = best
  FeatureVector features;

  /// Score rendered as an integer percentage for badges.
  int confidence_pct() const { return static_cast<int>(std::lround(100.0 * score)); }
};

inline nlohmann::json to_json(const RankedPrediction& p) {
  nlohmann::json j{{"rank", p.rank},
                   {"change_key", p.change_key},
                   {"subject", p.subject},
                   {"score", p.score},
                   {"confidence_pct", p.confidence_pct()},
                   {"features", to_json(p.features)}};
  j["url"] = p.url ? nlohmann::json(*p.url) : nlohmann::json(nullptr);
  return j;
}

struct RankRequest {
  static constexpr std::size_t kDefaultTopK = 5;

  ChangeRecord target;
  std::vector<ChangeRecord> pool;
  WindowConfig window;
  std::size_t top_k = kDefaultTopK;
  ProjectScope scope = ProjectScope::same_project;
};

/// Total order used everywhere a ranking is produced: score descending, then
/// time gap ascending, then change_key ascending.
struct ScoredCandidate {
  const ChangeRecord* change = nullptr;
  double score = 0.0;
  FeatureVector features;
};

inline bool ranks_before(const ScoredCandidate& x, const ScoredCandidate& y) {
  if (x.score != y.score) return x.score > y.score;
  if (x.features.time_diff_hours != y.features.time_diff_hours)
    return x.features.time_diff_hours < y.features.time_diff_hours;
  return x.change->change_key < y.change->change_key;
}

inline std::pair<double, FeatureVector> score_pair(const ChangeRecord& a, const ChangeRecord& b,
                                                   const ForestModel& model,
                                                   const EmbeddingProvider& provider,
                                                   EmbeddingCache& cache) {
  FeatureVector fv = featurize_pair(a, b, provider, cache);
  return {predict_proba(model, fv), fv};
}

/// Scores every candidate against the target and returns the full ordered list.
inline std::vector<ScoredCandidate> score_candidates(const CandidateSet& set,
                                                     const ForestModel& model,
                                                     const EmbeddingProvider& provider,
                                                     EmbeddingCache& cache) {
  std::vector<ScoredCandidate> scored;
  scored.reserve(set.candidates.size());
  if (set.candidates.empty()) return scored;
  const auto target_vec = cached_embed(provider, set.target, cache);
  for (const auto& c : set.candidates) {
    std::shared_ptr<const EmbeddingVector> vec;
    try {
      vec = cached_embed(provider, c, cache);
    } catch (const ProviderFailure& e) {
      throw ProviderFailure(std::string(e.what()) + " (candidate " + c.change_key + ")");
    }
    FeatureVector fv = featurize_with_embeddings(set.target, *target_vec, c, *vec);
    scored.push_back({&c, predict_proba(model, fv), fv});
  }
  std::sort(scored.begin(), scored.end(), ranks_before);
  return scored;
}

inline std::vector<RankedPrediction> rank_candidates(const RankRequest& request,
                                                     const ForestModel& model,
                                                     const EmbeddingProvider& provider,
                                                     EmbeddingCache& cache) {
  if (request.top_k == 0) throw InvalidArgument("top_k must be at least 1");
  const CandidateSet set = select_candidates(request.target, request.pool, request.window, request.scope);
  const auto scored = score_candidates(set, model, provider, cache);
  std::vector<RankedPrediction> out;
  const std::size_t m = std::min(request.top_k, scored.size());
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& s = scored[i];
    out.push_back(RankedPrediction{s.change->change_key, s.change->subject, s.change->url, s.score,
                                   i + 1, s.features});
  }
  return out;
}

}  // namespace patchlink
