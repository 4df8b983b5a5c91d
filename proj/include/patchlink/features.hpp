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

// Pairwise similarity signals between two changes.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "patchlink/core_model.hpp"
#include "patchlink/embedding.hpp"

namespace patchlink {

inline constexpr std::size_t kFeatureCount = 6;

/// Canonical feature order. Model files must list exactly these names.
inline const std::array<std::string, kFeatureCount>& feature_names() {
  static const std::array<std::string, kFeatureCount> names{
      "semantic_sim", "lcp_max", "lcs_max", "jaccard", "time_diff_hours", "delta_files"};
  return names;
}

struct FeatureVector {
  double semantic_sim = 0.0;
  double lcp_max = 0.0;
  double lcs_max = 0.0;
  double jaccard = 0.0;
  double time_diff_hours = 0.0;
  std::int64_t delta_files = 0;

  std::array<double, kFeatureCount> values() const {
    return {semantic_sim, lcp_max, lcs_max, jaccard, time_diff_hours,
            static_cast<double>(delta_files)};
  }

  static FeatureVector from_values(std::span<const double> v) {
    if (v.size() != kFeatureCount) throw DimensionMismatch(kFeatureCount, v.size());
    return FeatureVector{v[0], v[1], v[2], v[3], v[4], static_cast<std::int64_t>(v[5])};
  }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

inline std::vector<std::string_view> path_segments(std::string_view path) {
  std::vector<std::string_view> segs;
  std::size_t start = 0;
  while (start <= path.size()) {
    std::size_t end = path.find('/', start);
    if (end == std::string_view::npos) end = path.size();
    if (end > start) segs.push_back(path.substr(start, end - start));
    start = end + 1;
  }
  return segs;
}

namespace detail {

inline double normalized_overlap(std::size_t shared, std::size_t lp, std::size_t lq) {
  const std::size_t denom = std::max(lp, lq);
  return denom == 0 ? 0.0 : static_cast<double>(shared) / static_cast<double>(denom);
}

inline std::size_t common_prefix(std::span<const std::string_view> p,
                                 std::span<const std::string_view> q) {
  const std::size_t n = std::min(p.size(), q.size());
  std::size_t i = 0;
  while (i < n && p[i] == q[i]) ++i;
  return i;
}

inline std::size_t common_suffix(std::span<const std::string_view> p,
                                 std::span<const std::string_view> q) {
  const std::size_t n = std::min(p.size(), q.size());
  std::size_t i = 0;
  while (i < n && p[p.size() - 1 - i] == q[q.size() - 1 - i]) ++i;
  return i;
}

}  // namespace detail

/// Shared leading segments over the longer segment count.
inline double norm_lcp(std::string_view p, std::string_view q) {
  const auto sp = path_segments(p), sq = path_segments(q);
  return detail::normalized_overlap(detail::common_prefix(sp, sq), sp.size(), sq.size());
}

/// Shared trailing segments over the longer segment count. Segments compare
/// whole, so `x.py` and `y.py` share nothing.
inline double norm_lcs_suffix(std::string_view p, std::string_view q) {
  const auto sp = path_segments(p), sq = path_segments(q);
  return detail::normalized_overlap(detail::common_suffix(sp, sq), sp.size(), sq.size());
}

/// |A ∩ B| / |A ∪ B|; two empty sets score 0.
inline double jaccard_files(std::span<const std::string> a, std::span<const std::string> b) {
  const std::unordered_set<std::string_view> sa(a.begin(), a.end());
  const std::unordered_set<std::string_view> sb(b.begin(), b.end());
  std::size_t inter = 0;
  for (auto p : sa) inter += sb.count(p);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Maximum prefix / suffix overlap over every pair of files, 0 when either
/// side has no files.
struct PathOverlap {
  double lcp_max = 0.0;
  double lcs_max = 0.0;
};

inline PathOverlap max_path_overlap(std::span<const std::string> a, std::span<const std::string> b) {
  PathOverlap out;
  if (a.empty() || b.empty()) return out;
  std::vector<std::vector<std::string_view>> segs_b;
  segs_b.reserve(b.size());
  for (const auto& g : b) segs_b.push_back(path_segments(g));
  for (const auto& f : a) {
    const auto sf = path_segments(f);
    for (const auto& sg : segs_b) {
      out.lcp_max = std::max(out.lcp_max, detail::normalized_overlap(detail::common_prefix(sf, sg),
                                                                     sf.size(), sg.size()));
      out.lcs_max = std::max(out.lcs_max, detail::normalized_overlap(detail::common_suffix(sf, sg),
                                                                     sf.size(), sg.size()));
    }
  }
  return out;
}

/// Every feature except semantic_sim; needs no embedder.
inline FeatureVector structural_features(const ChangeRecord& a, const ChangeRecord& b) {
  FeatureVector fv;
  const auto overlap = max_path_overlap(a.files, b.files);
  fv.lcp_max = overlap.lcp_max;
  fv.lcs_max = overlap.lcs_max;
  fv.jaccard = jaccard_files(a.files, b.files);
  const auto dt = a.created_at - b.created_at;
  fv.time_diff_hours = std::abs(static_cast<double>(dt.count())) / 3600.0;
  const auto na = static_cast<std::int64_t>(a.files.size());
  const auto nb = static_cast<std::int64_t>(b.files.size());
  fv.delta_files = na > nb ? na - nb : nb - na;
  return fv;
}

/// Combines precomputed embeddings with the structural features.
inline FeatureVector featurize_with_embeddings(const ChangeRecord& a, const EmbeddingVector& ea,
                                               const ChangeRecord& b, const EmbeddingVector& eb) {
  FeatureVector fv = structural_features(a, b);
  fv.semantic_sim = std::max(0.0, cosine_similarity(ea, eb));
  return fv;
}

inline FeatureVector featurize_pair(const ChangeRecord& a, const ChangeRecord& b,
                                    const EmbeddingProvider& provider, EmbeddingCache& cache) {
  const auto ea = cached_embed(provider, a, cache);
  const auto eb = cached_embed(provider, b, cache);
  return featurize_with_embeddings(a, *ea, b, *eb);
}

inline nlohmann::json to_json(const FeatureVector& fv) {
  const auto vals = fv.values();
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < kFeatureCount; ++i) j[feature_names()[i]] = vals[i];
  j["delta_files"] = fv.delta_files;
  return j;
}

}  // namespace patchlink
