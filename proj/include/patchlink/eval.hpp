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

// Training-pair construction, lexical/structural baselines, and ranking
// metrics (Recall@K, MRR) over temporal windows.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "patchlink/classifier.hpp"
#include "patchlink/core_model.hpp"
#include "patchlink/embedding.hpp"
#include "patchlink/features.hpp"
#include "patchlink/logging.hpp"
#include "patchlink/pipeline.hpp"

namespace patchlink::eval {

// --- training pairs -------------------------------------------------------

struct TrainingSet {
  std::vector<LabeledSample> samples;
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;
  std::size_t n_out_of_window = 0;  // links skipped: partner outside the window
  std::size_t n_no_negatives = 0;   // anchors with no unlinked candidate
};

struct PairSamplingConfig {
  WindowConfig window{WindowConfig::kDefaultDays, WindowMode::symmetric};
  std::size_t negatives_per_positive = 5;
  std::uint64_t seed = 42;
  ProjectScope scope = ProjectScope::same_project;
};

namespace detail {

inline std::unordered_map<std::string, const ChangeRecord*> index_by_key(
    const std::vector<ChangeRecord>& changes) {
  std::unordered_map<std::string, const ChangeRecord*> idx;
  idx.reserve(changes.size());
  for (const auto& c : changes) idx.emplace(c.change_key, &c);
  return idx;
}

inline std::unordered_map<std::string, std::unordered_set<std::string>> link_partners(
    const std::vector<LinkLabel>& links) {
  std::unordered_map<std::string, std::unordered_set<std::string>> out;
  for (const auto& l : links) {
    out[l.a].insert(l.b);
    out[l.b].insert(l.a);
  }
  return out;
}

}  // namespace detail

/// One positive per in-window link (anchored at the lexicographically smaller
/// key) plus up to `negatives_per_positive` unlinked in-window candidates of
/// the anchor, drawn uniformly without replacement.
inline TrainingSet build_training_pairs(const std::vector<ChangeRecord>& changes,
                                        const std::vector<LinkLabel>& links,
                                        const PairSamplingConfig& cfg,
                                        const EmbeddingProvider& provider, EmbeddingCache& cache) {
  if (cfg.negatives_per_positive == 0) throw InvalidArgument("negatives_per_positive must be positive");
  const auto by_key = detail::index_by_key(changes);
  const auto partners = detail::link_partners(links);
  for (const auto& l : links)
    for (const auto* k : {&l.a, &l.b})
      if (!by_key.count(*k)) throw MissingChange(*k);

  TrainingSet out;
  SplitMix64 rng(cfg.seed);
  for (const auto& l : links) {
    const ChangeRecord& anchor = *by_key.at(l.a);
    const ChangeRecord& partner = *by_key.at(l.b);
    const CandidateSet set = select_candidates(anchor, changes, cfg.window, cfg.scope);
    const bool in_window =
        std::any_of(set.candidates.begin(), set.candidates.end(),
                    [&](const ChangeRecord& c) { return c.change_key == partner.change_key; });
    if (!in_window) {
      ++out.n_out_of_window;
      continue;
    }
    out.samples.push_back({featurize_pair(anchor, partner, provider, cache), 1});
    ++out.n_positive;

    const auto& linked = partners.at(anchor.change_key);
    std::vector<const ChangeRecord*> pool;
    for (const auto& c : set.candidates)
      if (!linked.count(c.change_key)) pool.push_back(&c);
    if (pool.empty()) {
      ++out.n_no_negatives;
      log::warn("no negatives available in window for " + anchor.change_key);
      continue;
    }
    const std::size_t take = std::min(cfg.negatives_per_positive, pool.size());
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
      out.samples.push_back({featurize_pair(anchor, *pool[i], provider, cache), 0});
      ++out.n_negative;
    }
  }
  return out;
}

// --- TF-IDF text baseline ---------------------------------------------------

/// Document frequencies over a corpus; a document is subject + "\n" +
/// description tokenized like the fallback embedder.
class CorpusStats {
 public:
  using SparseVector = std::vector<std::pair<std::string, double>>;  // sorted by term

  CorpusStats() = default;
  explicit CorpusStats(std::span<const ChangeRecord> corpus) {
    for (const auto& c : corpus) add_document(c.text());
  }

  void add_document(std::string_view text) {
    ++n_docs_;
    auto toks = tokenize(text);
    std::sort(toks.begin(), toks.end());
    toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
    for (auto& t : toks) ++df_[std::move(t)];
  }

  std::size_t n_documents() const { return n_docs_; }

  std::size_t document_frequency(const std::string& term) const {
    auto it = df_.find(term);
    return it == df_.end() ? 0 : it->second;
  }

  /// Smoothed inverse document frequency: ln((N + 1) / (df + 1)) + 1.
  double idf(const std::string& term) const {
    return std::log(static_cast<double>(n_docs_ + 1) /
                    static_cast<double>(document_frequency(term) + 1)) +
           1.0;
  }

  /// Raw term counts weighted by idf.
  SparseVector weigh(std::string_view text) const {
    std::map<std::string, std::size_t> tf;
    for (auto& t : tokenize(text)) ++tf[std::move(t)];
    SparseVector v;
    v.reserve(tf.size());
    for (const auto& [term, count] : tf) v.emplace_back(term, static_cast<double>(count) * idf(term));
    return v;
  }

 private:
  std::size_t n_docs_ = 0;
  std::unordered_map<std::string, std::size_t> df_;
};

inline double sparse_cosine(const CorpusStats::SparseVector& a, const CorpusStats::SparseVector& b) {
  if (a.empty() || b.empty()) return 0.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [t, w] : a) na += w * w;
  for (const auto& [t, w] : b) nb += w * w;
  for (std::size_t i = 0, j = 0; i < a.size() && j < b.size();) {
    if (a[i].first < b[j].first) {
      ++i;
    } else if (b[j].first < a[i].first) {
      ++j;
    } else {
      dot += a[i].second * b[j].second;
      ++i;
      ++j;
    }
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

inline double tfidf_cosine(const ChangeRecord& a, const ChangeRecord& b, const CorpusStats& stats) {
  return sparse_cosine(stats.weigh(a.text()), stats.weigh(b.text()));
}

// --- methods --------------------------------------------------------------

enum class Method { learned, combined, text_only, file_only };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::learned: return "learned";
    case Method::combined: return "combined";
    case Method::text_only: return "text_only";
    case Method::file_only: return "file_only";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  for (Method m : {Method::learned, Method::combined, Method::text_only, Method::file_only})
    if (to_string(m) == s) return m;
  throw UnknownMethod(std::string(s));
}

/// Mean of the three path signals.
inline double file_only_score(const FeatureVector& fv) {
  return (fv.lcp_max + fv.lcs_max + fv.jaccard) / 3.0;
}

/// Static (non-learned) similarity used by the comparison baselines.
inline double baseline_score(Method method, const ChangeRecord& a, const ChangeRecord& b,
                             const CorpusStats& stats) {
  switch (method) {
    case Method::text_only: return tfidf_cosine(a, b, stats);
    case Method::file_only: return file_only_score(structural_features(a, b));
    case Method::combined:
      return (tfidf_cosine(a, b, stats) + file_only_score(structural_features(a, b))) / 2.0;
    case Method::learned: break;
  }
  throw UnknownMethod(std::string(to_string(method)));
}

// --- metrics --------------------------------------------------------------

/// 1 / (position of first relevant key), 0 when none is present.
inline double reciprocal_rank(std::span<const std::string> ranked,
                              const std::unordered_set<std::string>& relevant) {
  for (std::size_t i = 0; i < ranked.size(); ++i)
    if (relevant.count(ranked[i])) return 1.0 / static_cast<double>(i + 1);
  return 0.0;
}

/// Whether a relevant key appears among the first `k` entries.
inline bool hit_at_k(std::span<const std::string> ranked,
                     const std::unordered_set<std::string>& relevant, std::size_t k) {
  if (k == 0) throw InvalidArgument("K must be at least 1");
  const std::size_t n = std::min(k, ranked.size());
  for (std::size_t i = 0; i < n; ++i)
    if (relevant.count(ranked[i])) return true;
  return false;
}

struct RankedQuery {
  std::vector<std::string> ranked;
  std::unordered_set<std::string> relevant;
};

/// Fraction of queries with a hit in the top `k`.
inline double recall_at_k(std::span<const RankedQuery> queries, std::size_t k) {
  if (queries.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& q : queries) hits += hit_at_k(q.ranked, q.relevant, k) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(queries.size());
}

inline double mean_reciprocal_rank(std::span<const RankedQuery> queries) {
  if (queries.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& q : queries) sum += reciprocal_rank(q.ranked, q.relevant);
  return sum / static_cast<double>(queries.size());
}

// --- evaluation -------------------------------------------------------------

struct EvalConfig {
  std::vector<int> windows{2, 7, 14, 30};
  std::vector<std::size_t> ks{1, 2, 4, 6, 8, 10};
  std::vector<Method> methods{Method::learned, Method::combined, Method::text_only, Method::file_only};
  WindowMode window_mode = WindowMode::symmetric;
  ProjectScope scope = ProjectScope::same_project;

  void validate() const {
    if (windows.empty() || ks.empty() || methods.empty())
      throw InvalidArgument("evaluation needs at least one window, K and method");
    for (int w : windows)
      if (!WindowConfig::valid_days(w)) throw InvalidArgument("window days must be in 1..365");
    for (std::size_t k : ks)
      if (k == 0) throw InvalidArgument("K must be at least 1");
    if (!std::is_sorted(ks.begin(), ks.end())) throw InvalidArgument("K values must be ascending");
  }
};

struct EvalCell {
  Method method = Method::learned;
  int window_days = 0;
  std::size_t n_queries = 0;
  std::size_t n_empty = 0;  // queries whose candidate set was empty
  double mrr = 0.0;
  std::vector<std::pair<std::size_t, double>> recall_at;  // (K, recall), K ascending
};

struct EvalReport {
  std::vector<EvalCell> cells;  // window-major, then method in config order

  const EvalCell* find(Method m, int window_days) const {
    for (const auto& c : cells)
      if (c.method == m && c.window_days == window_days) return &c;
    return nullptr;
  }
};

/// Full (untruncated) rankings of one query's candidates for each method.
struct QueryRankings {
  std::string query;
  std::unordered_set<std::string> relevant;
  std::map<Method, std::vector<std::string>> ranked;
};

/// Ranks every candidate of every link-participating change under each
/// window and method. Exposed separately so metrics can be cross-checked.
inline std::vector<std::pair<int, std::vector<QueryRankings>>> rank_for_evaluation(
    const std::vector<ChangeRecord>& changes, const std::vector<LinkLabel>& links,
    const ForestModel* model, const EmbeddingProvider& provider, EmbeddingCache& cache,
    const EvalConfig& cfg) {
  cfg.validate();
  const bool need_model = std::find(cfg.methods.begin(), cfg.methods.end(), Method::learned) != cfg.methods.end();
  if (need_model && !model) throw InvalidArgument("the learned method needs a model");
  const auto by_key = detail::index_by_key(changes);
  const auto partners = detail::link_partners(links);

  std::vector<std::string> queries;
  for (const auto& [key, linked] : partners) {
    if (!by_key.count(key)) throw MissingChange(key);
    queries.push_back(key);
  }
  std::sort(queries.begin(), queries.end());

  const CorpusStats stats(changes);
  std::unordered_map<std::string, CorpusStats::SparseVector> tfidf;
  for (const auto& c : changes) tfidf.emplace(c.change_key, stats.weigh(c.text()));

  std::vector<std::pair<int, std::vector<QueryRankings>>> out;
  for (int days : cfg.windows) {
    const WindowConfig window{days, cfg.window_mode};
    std::vector<QueryRankings> per_query;
    per_query.reserve(queries.size());
    for (const auto& qkey : queries) {
      const ChangeRecord& target = *by_key.at(qkey);
      const CandidateSet set = select_candidates(target, changes, window, cfg.scope);
      QueryRankings qr;
      qr.query = qkey;
      qr.relevant = partners.at(qkey);

      std::vector<FeatureVector> structural;
      structural.reserve(set.candidates.size());
      for (const auto& c : set.candidates) structural.push_back(structural_features(target, c));

      std::shared_ptr<const EmbeddingVector> target_vec;
      if (need_model && !set.candidates.empty()) target_vec = cached_embed(provider, target, cache);

      for (Method m : cfg.methods) {
        std::vector<ScoredCandidate> scored;
        scored.reserve(set.candidates.size());
        for (std::size_t i = 0; i < set.candidates.size(); ++i) {
          const auto& c = set.candidates[i];
          FeatureVector fv = structural[i];
          double score = 0.0;
          const double text = m == Method::learned || m == Method::file_only
                                  ? 0.0
                                  : sparse_cosine(tfidf.at(qkey), tfidf.at(c.change_key));
          switch (m) {
            case Method::learned:
              fv.semantic_sim = std::max(0.0, cosine_similarity(*target_vec, *cached_embed(provider, c, cache)));
              score = predict_proba(*model, fv);
              break;
            case Method::text_only: score = text; break;
            case Method::file_only: score = file_only_score(fv); break;
            case Method::combined: score = (text + file_only_score(fv)) / 2.0; break;
          }
          scored.push_back({&c, score, fv});
        }
        std::sort(scored.begin(), scored.end(), ranks_before);
        auto& keys = qr.ranked[m];
        keys.reserve(scored.size());
        for (const auto& s : scored) keys.push_back(s.change->change_key);
      }
      per_query.push_back(std::move(qr));
    }
    out.emplace_back(days, std::move(per_query));
  }
  return out;
}

inline EvalReport run_evaluation(const std::vector<ChangeRecord>& changes,
                                 const std::vector<LinkLabel>& links, const ForestModel* model,
                                 const EmbeddingProvider& provider, EmbeddingCache& cache,
                                 const EvalConfig& cfg) {
  const auto rankings = rank_for_evaluation(changes, links, model, provider, cache, cfg);
  EvalReport report;
  for (const auto& [days, per_query] : rankings) {
    for (Method m : cfg.methods) {
      std::vector<RankedQuery> queries;
      queries.reserve(per_query.size());
      EvalCell cell;
      cell.method = m;
      cell.window_days = days;
      for (const auto& qr : per_query) {
        const auto& ranked = qr.ranked.at(m);
        if (ranked.empty()) ++cell.n_empty;
        queries.push_back({ranked, qr.relevant});
      }
      cell.n_queries = queries.size();
      cell.mrr = mean_reciprocal_rank(queries);
      for (std::size_t k : cfg.ks) cell.recall_at.emplace_back(k, recall_at_k(queries, k));
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

// --- report output ----------------------------------------------------------

inline nlohmann::json to_json(const EvalCell& c) {
  nlohmann::json recall = nlohmann::json::object();
  for (const auto& [k, r] : c.recall_at) recall[std::to_string(k)] = r;
  return {{"method", to_string(c.method)}, {"window_days", c.window_days},
          {"n_queries", c.n_queries},      {"n_empty", c.n_empty},
          {"mrr", c.mrr},                  {"recall_at", std::move(recall)}};
}

/// One JSON object per (method, window) cell.
inline std::string to_jsonl(const EvalReport& r) {
  std::string out;
  for (const auto& c : r.cells) out += to_json(c).dump() + "\n";
  return out;
}

/// MRR table (windows x methods) followed by per-window Recall@K series.
inline std::string format_tables(const EvalReport& r) {
  std::vector<int> windows;
  std::vector<Method> methods;
  std::vector<std::size_t> ks;
  for (const auto& c : r.cells) {
    if (std::find(windows.begin(), windows.end(), c.window_days) == windows.end()) windows.push_back(c.window_days);
    if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) methods.push_back(c.method);
    if (ks.empty())
      for (const auto& [k, v] : c.recall_at) ks.push_back(k);
  }
  std::ostringstream os;
  char buf[64];
  os << "MRR by window\n";
  std::snprintf(buf, sizeof buf, "%-14s", "window (days)");
  os << buf;
  for (Method m : methods) {
    std::snprintf(buf, sizeof buf, "%12s", std::string(to_string(m)).c_str());
    os << buf;
  }
  os << '\n';
  for (int w : windows) {
    std::snprintf(buf, sizeof buf, "%-14d", w);
    os << buf;
    for (Method m : methods) {
      const EvalCell* c = r.find(m, w);
      std::snprintf(buf, sizeof buf, "%12.4f", c ? c->mrr : 0.0);
      os << buf;
    }
    os << '\n';
  }
  for (int w : windows) {
    os << "\nRecall@K, window " << w << " days\n";
    std::snprintf(buf, sizeof buf, "%-14s", "K");
    os << buf;
    for (Method m : methods) {
      std::snprintf(buf, sizeof buf, "%12s", std::string(to_string(m)).c_str());
      os << buf;
    }
    os << '\n';
    for (std::size_t i = 0; i < ks.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%-14zu", ks[i]);
      os << buf;
      for (Method m : methods) {
        const EvalCell* c = r.find(m, w);
        std::snprintf(buf, sizeof buf, "%12.4f", c && i < c->recall_at.size() ? c->recall_at[i].second : 0.0);
        os << buf;
      }
      os << '\n';
    }
  }
  return os.str();
}

}  // namespace patchlink::eval
