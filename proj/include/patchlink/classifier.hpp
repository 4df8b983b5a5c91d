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

// Random-forest binary classifier: bootstrap-bagged Gini trees with per-node
// feature subsampling, mean-of-leaf-frequency probabilities, and a versioned
// JSON model format.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <future>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "patchlink/core_model.hpp"
#include "patchlink/error.hpp"
#include "patchlink/features.hpp"

namespace patchlink {

/// splitmix64 generator; small, fast, and identical on every platform.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() { return next(); }

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Unbiased draw from [0, bound).
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = -bound % bound;  // 2^64 mod bound
    for (;;) {
      const std::uint64_t r = next();
      if (r >= limit) return r % bound;
    }
  }

 private:
  std::uint64_t state_;
};

/// Gini impurity of a two-class count pair.
inline double gini(std::uint64_t neg, std::uint64_t pos) {
  const double n = static_cast<double>(neg + pos);
  if (n == 0.0) return 0.0;
  const double p0 = static_cast<double>(neg) / n, p1 = static_cast<double>(pos) / n;
  return 1.0 - (p0 * p0 + p1 * p1);
}

struct TreeNode {
  int feature = -1;  // < 0 marks a leaf
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::array<std::uint64_t, 2> counts{};  // [neg, pos], leaves only

  bool is_leaf() const { return feature < 0; }

  static TreeNode leaf(std::uint64_t neg, std::uint64_t pos) {
    TreeNode n;
    n.counts = {neg, pos};
    return n;
  }

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Flattened tree; nodes[0] is the root and children always follow parents.
struct DecisionTree {
  std::vector<TreeNode> nodes;

  const TreeNode& leaf_for(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf()) {
      const auto& n = nodes[i];
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left
                                                                                          : n.right);
    }
    return nodes[i];
  }

  /// Positive-class frequency at the reached leaf.
  double predict(std::span<const double> x) const {
    const auto& leaf = leaf_for(x);
    return static_cast<double>(leaf.counts[1]) /
           static_cast<double>(leaf.counts[0] + leaf.counts[1]);
  }

  std::size_t depth() const {
    std::vector<std::size_t> d(nodes.size(), 0);
    std::size_t best = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      best = std::max(best, d[i]);
      if (!nodes[i].is_leaf()) {
        d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
        d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
      }
    }
    return best;
  }

  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

inline constexpr const char* kModelFormatVersion = "1";

struct ForestModel {
  std::vector<DecisionTree> trees;
  std::vector<std::string> feature_names;
  std::uint64_t seed = 0;
  std::string version = kModelFormatVersion;
  Timestamp trained_at{};

  std::size_t n_trees() const { return trees.size(); }

  friend bool operator==(const ForestModel&, const ForestModel&) = default;
};

struct TrainConfig {
  std::size_t n_trees = 100;
  std::size_t max_depth = 16;
  std::size_t min_samples_split = 2;
  std::size_t features_per_split = 3;  // ceil(sqrt(6))
  std::uint64_t seed = 42;
  std::size_t threads = 0;  // 0 = hardware concurrency; does not affect the result

  void validate(std::size_t dimension) const {
    if (n_trees == 0 || max_depth == 0 || min_samples_split == 0 || features_per_split == 0)
      throw InvalidArgument("training hyperparameters must be positive");
    if (features_per_split > dimension)
      throw InvalidArgument("features_per_split exceeds feature dimension");
  }
};

struct LabeledSample {
  FeatureVector x;
  int label = 0;  // 0 or 1
};

namespace detail {

class TreeGrower {
 public:
  TreeGrower(const std::vector<std::array<double, kFeatureCount>>& rows,
             const std::vector<int>& labels, const TrainConfig& cfg, SplitMix64& rng)
      : rows_(rows), labels_(labels), cfg_(cfg), rng_(rng) {}

  DecisionTree grow(std::vector<std::size_t> sample) {
    DecisionTree tree;
    build(tree, sample, 0);
    return tree;
  }

 private:
  struct Split {
    bool found = false;
    int feature = 0;
    double threshold = 0.0;
    double score = 0.0;  // weighted child impurity, lower is better
  };

  std::int32_t build(DecisionTree& tree, std::vector<std::size_t>& idx, std::size_t depth) {
    std::uint64_t pos = 0;
    for (auto i : idx) pos += static_cast<std::uint64_t>(labels_[i]);
    const std::uint64_t neg = idx.size() - pos;
    const auto self = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.push_back(TreeNode::leaf(neg, pos));

    if (depth >= cfg_.max_depth || idx.size() < cfg_.min_samples_split || pos == 0 || neg == 0)
      return self;

    const Split best = find_split(idx);
    if (!best.found) return self;

    std::vector<std::size_t> left, right;
    for (auto i : idx)
      (rows_[i][static_cast<std::size_t>(best.feature)] <= best.threshold ? left : right).push_back(i);
    idx.clear();
    idx.shrink_to_fit();

    TreeNode node;
    node.feature = best.feature;
    node.threshold = best.threshold;
    const std::int32_t l = build(tree, left, depth + 1);
    const std::int32_t r = build(tree, right, depth + 1);
    node.left = l;
    node.right = r;
    tree.nodes[static_cast<std::size_t>(self)] = node;
    return self;
  }

  Split find_split(const std::vector<std::size_t>& idx) {
    std::array<int, kFeatureCount> order;
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = kFeatureCount - 1; i > 0; --i)
      std::swap(order[i], order[rng_.below(i + 1)]);

    Split best;
    // Draw features_per_split candidates; keep going past that only while
    // every feature examined so far is constant on this node.
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
      if (k >= cfg_.features_per_split && best.found) break;
      evaluate_feature(idx, order[k], best);
    }
    return best;
  }

  void evaluate_feature(const std::vector<std::size_t>& idx, int feature, Split& best) {
    const auto f = static_cast<std::size_t>(feature);
    std::vector<std::pair<double, int>> col;
    col.reserve(idx.size());
    for (auto i : idx) col.emplace_back(rows_[i][f], labels_[i]);
    std::sort(col.begin(), col.end());

    std::uint64_t total_pos = 0;
    for (const auto& [v, y] : col) total_pos += static_cast<std::uint64_t>(y);
    const std::uint64_t n = col.size();
    std::uint64_t lpos = 0;
    for (std::size_t i = 0; i + 1 < col.size(); ++i) {
      lpos += static_cast<std::uint64_t>(col[i].second);
      if (!(col[i].first < col[i + 1].first)) continue;
      const std::uint64_t nl = i + 1, nr = n - nl;
      const std::uint64_t rpos = total_pos - lpos;
      const double score = static_cast<double>(nl) * gini(nl - lpos, lpos) +
                           static_cast<double>(nr) * gini(nr - rpos, rpos);
      double thr = std::midpoint(col[i].first, col[i + 1].first);
      if (!(thr < col[i + 1].first)) thr = col[i].first;
      const bool better =
          !best.found || score < best.score ||
          (score == best.score &&
           (feature < best.feature || (feature == best.feature && thr < best.threshold)));
      if (better) best = Split{true, feature, thr, score};
    }
  }

  const std::vector<std::array<double, kFeatureCount>>& rows_;
  const std::vector<int>& labels_;
  const TrainConfig& cfg_;
  SplitMix64& rng_;
};

inline DecisionTree train_tree(const std::vector<std::array<double, kFeatureCount>>& rows,
                               const std::vector<int>& labels, const TrainConfig& cfg,
                               std::size_t tree_index) {
  SplitMix64 rng(cfg.seed ^ static_cast<std::uint64_t>(tree_index));
  std::vector<std::size_t> sample(rows.size());
  for (auto& s : sample) s = static_cast<std::size_t>(rng.below(rows.size()));
  TreeGrower grower(rows, labels, cfg, rng);
  return grower.grow(std::move(sample));
}

}  // namespace detail

/// Trains a forest. The result depends only on `samples`, `config` (minus
/// `threads`) and `trained_at`.
inline ForestModel train(std::span<const LabeledSample> samples, const TrainConfig& config,
                         Timestamp trained_at = Timestamp{}) {
  config.validate(kFeatureCount);
  if (samples.size() < 2) throw EmptyTrainingSet();
  std::vector<std::array<double, kFeatureCount>> rows;
  std::vector<int> labels;
  rows.reserve(samples.size());
  labels.reserve(samples.size());
  bool has_pos = false, has_neg = false;
  for (const auto& s : samples) {
    if (s.label != 0 && s.label != 1) throw InvalidArgument("labels must be 0 or 1");
    const auto v = s.x.values();
    if (!std::all_of(v.begin(), v.end(), [](double d) { return std::isfinite(d); }))
      throw InvalidArgument("non-finite feature value in training data");
    rows.push_back(v);
    labels.push_back(s.label);
    (s.label ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) throw SingleClassData();

  ForestModel model;
  model.feature_names.assign(feature_names().begin(), feature_names().end());
  model.seed = config.seed;
  model.trained_at = trained_at;
  model.trees.resize(config.n_trees);

  std::size_t workers = config.threads ? config.threads : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, config.n_trees);
  std::vector<std::future<void>> jobs;
  for (std::size_t w = 0; w < workers; ++w) {
    jobs.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t t = w; t < config.n_trees; t += workers)
        model.trees[t] = detail::train_tree(rows, labels, config, t);
    }));
  }
  for (auto& j : jobs) j.get();
  return model;
}

/// Mean over trees of the positive-class frequency at the reached leaf.
inline double predict_proba(const ForestModel& model, std::span<const double> x) {
  if (x.size() != model.feature_names.size()) throw DimensionMismatch(model.feature_names.size(), x.size());
  if (model.trees.empty()) throw MalformedModel("model has no trees");
  double sum = 0.0;
  for (const auto& t : model.trees) sum += t.predict(x);
  return sum / static_cast<double>(model.trees.size());
}

inline double predict_proba(const ForestModel& model, const FeatureVector& fv) {
  const auto v = fv.values();
  return predict_proba(model, std::span<const double>(v));
}

// --- model file -------------------------------------------------------------

inline nlohmann::json to_json(const ForestModel& m) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : m.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes) {
      if (n.is_leaf())
        nodes.push_back({{"counts", {n.counts[0], n.counts[1]}}});
      else
        nodes.push_back({{"f", n.feature}, {"t", n.threshold}, {"l", n.left}, {"r", n.right}});
    }
    trees.push_back(std::move(nodes));
  }
  return {{"version", m.version},         {"feature_names", m.feature_names},
          {"n_trees", m.trees.size()},     {"seed", m.seed},
          {"trained_at", format_iso8601(m.trained_at)}, {"trees", std::move(trees)}};
}

namespace detail {

inline DecisionTree tree_from_json(const nlohmann::json& j, std::size_t dimension) {
  if (!j.is_array() || j.empty()) throw MalformedModel("tree must be a non-empty node array");
  DecisionTree t;
  t.nodes.reserve(j.size());
  const auto n_nodes = static_cast<std::int64_t>(j.size());
  std::vector<int> parents(j.size(), 0);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& node = j[i];
    TreeNode n;
    if (node.contains("counts")) {
      const auto& c = node["counts"];
      if (!c.is_array() || c.size() != 2 || !c[0].is_number_unsigned() || !c[1].is_number_unsigned())
        throw MalformedModel("leaf counts must be two non-negative integers");
      n.counts = {c[0].get<std::uint64_t>(), c[1].get<std::uint64_t>()};
      if (n.counts[0] + n.counts[1] == 0) throw MalformedModel("empty leaf");
    } else {
      const auto f = node.at("f").get<std::int64_t>();
      const auto l = node.at("l").get<std::int64_t>();
      const auto r = node.at("r").get<std::int64_t>();
      if (f < 0 || static_cast<std::size_t>(f) >= dimension)
        throw MalformedModel("feature index out of range");
      // Children strictly after their parent rules out cycles.
      if (l <= static_cast<std::int64_t>(i) || r <= static_cast<std::int64_t>(i) || l >= n_nodes ||
          r >= n_nodes || l == r)
        throw MalformedModel("child index out of range");
      n.feature = static_cast<int>(f);
      n.threshold = node.at("t").get<double>();
      n.left = static_cast<std::int32_t>(l);
      n.right = static_cast<std::int32_t>(r);
      ++parents[static_cast<std::size_t>(l)];
      ++parents[static_cast<std::size_t>(r)];
    }
    t.nodes.push_back(n);
  }
  for (std::size_t i = 1; i < parents.size(); ++i)
    if (parents[i] != 1) throw MalformedModel("node without exactly one parent");
  return t;
}

}  // namespace detail

inline ForestModel model_from_json(const nlohmann::json& j) {
  try {
    ForestModel m;
    const auto& v = j.at("version");
    m.version = v.is_string() ? v.get<std::string>() : v.dump();
    if (m.version != kModelFormatVersion) throw BadVersion(m.version);
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    if (!std::equal(m.feature_names.begin(), m.feature_names.end(), feature_names().begin(),
                    feature_names().end()))
      throw FeatureOrderMismatch();
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto ts_text = j.at("trained_at").get<std::string>();
    const auto ts = parse_iso8601(ts_text);
    if (!ts) throw MalformedModel("bad trained_at '" + ts_text + "'");
    m.trained_at = *ts;
    const auto& trees = j.at("trees");
    if (!trees.is_array()) throw MalformedModel("'trees' must be an array");
    for (const auto& t : trees) m.trees.push_back(detail::tree_from_json(t, m.feature_names.size()));
    if (j.at("n_trees").get<std::size_t>() != m.trees.size() || m.trees.empty())
      throw MalformedModel("n_trees does not match tree count");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedModel(e.what());
  }
}

inline std::string serialize_model(const ForestModel& m) { return to_json(m).dump() + "\n"; }

inline void save_model(const ForestModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << serialize_model(m);
  out.flush();
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline ForestModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::exception& e) {
    throw MalformedModel(e.what());
  }
  return model_from_json(j);
}

}  // namespace patchlink
