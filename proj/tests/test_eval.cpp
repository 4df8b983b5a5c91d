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

#include <gtest/gtest.h>

#include "oracles/reference.hpp"
#include "patchlink/eval.hpp"
#include "support/synthetic.hpp"

namespace patchlink {
namespace {

using eval::Method;
using std::chrono::hours;

ChangeRecord rec(std::string key, Timestamp at, std::string text, std::vector<std::string> files) {
  ChangeRecord c;
  c.change_key = std::move(key);
  c.project = "demo";
  c.subject = std::move(text);
  c.files = std::move(files);
  c.created_at = at;
  return c;
}

ForestModel train_on(const testing::SyntheticCorpus& corpus) {
  FallbackEmbedder provider;
  EmbeddingCache cache;
  const auto set = eval::build_training_pairs(corpus.changes, corpus.links, {}, provider, cache);
  TrainConfig cfg;
  cfg.n_trees = 30;
  return train(set.samples, cfg);
}

TEST(TrainingPairs, OnePositiveOneNegative) {
  const Timestamp t = testing::epoch_2024();
  const std::vector<ChangeRecord> changes{rec("a", t, "fix x", {"x/y.c"}), rec("b", t + hours{5}, "fix x", {"x/y.c"}),
                                          rec("c", t + hours{30}, "docs", {"doc/z.md"})};
  FallbackEmbedder provider;
  EmbeddingCache cache;
  eval::PairSamplingConfig cfg;
  cfg.negatives_per_positive = 1;
  const auto set = eval::build_training_pairs(changes, {LinkLabel::make("b", "a")}, cfg, provider, cache);
  ASSERT_EQ(set.samples.size(), 2u);
  EXPECT_EQ(set.n_positive, 1u);
  EXPECT_EQ(set.n_negative, 1u);
  EXPECT_EQ(set.samples[0].label, 1);
  EXPECT_EQ(set.samples[0].x, featurize_pair(changes[0], changes[1], provider, cache));
  EXPECT_EQ(set.samples[1].label, 0);
  EXPECT_EQ(set.samples[1].x, featurize_pair(changes[0], changes[2], provider, cache));
}

TEST(TrainingPairs, LinkOutsideWindowIsSkipped) {
  const Timestamp t = testing::epoch_2024();
  const std::vector<ChangeRecord> changes{rec("a", t, "fix x", {"x/y.c"}),
                                          rec("b", t + hours{20 * 24}, "fix x", {"x/y.c"}),
                                          rec("c", t + hours{30}, "docs", {"doc/z.md"})};
  FallbackEmbedder provider;
  EmbeddingCache cache;
  const auto set = eval::build_training_pairs(changes, {LinkLabel::make("a", "b")}, {}, provider, cache);
  EXPECT_TRUE(set.samples.empty());
  EXPECT_EQ(set.n_out_of_window, 1u);
}

TEST(TrainingPairs, SparseWindowAndMissingChange) {
  const Timestamp t = testing::epoch_2024();
  const std::vector<ChangeRecord> changes{rec("a", t, "fix x", {"x/y.c"}), rec("b", t + hours{1}, "fix x", {"x/y.c"})};
  FallbackEmbedder provider;
  EmbeddingCache cache;
  const auto set = eval::build_training_pairs(changes, {LinkLabel::make("a", "b")}, {}, provider, cache);
  EXPECT_EQ(set.n_positive, 1u);
  EXPECT_EQ(set.n_no_negatives, 1u);
  EXPECT_THROW(eval::build_training_pairs(changes, {LinkLabel::make("a", "zz")}, {}, provider, cache), MissingChange);
}

TEST(TrainingPairs, SeededSamplingIsDeterministic) {
  const auto corpus = testing::make_linked_corpus(120, 10, 5);
  FallbackEmbedder provider;
  EmbeddingCache cache;
  eval::PairSamplingConfig cfg;
  cfg.negatives_per_positive = 3;
  const auto one = eval::build_training_pairs(corpus.changes, corpus.links, cfg, provider, cache);
  const auto two = eval::build_training_pairs(corpus.changes, corpus.links, cfg, provider, cache);
  ASSERT_EQ(one.samples.size(), two.samples.size());
  for (std::size_t i = 0; i < one.samples.size(); ++i) {
    EXPECT_EQ(one.samples[i].x, two.samples[i].x);
    EXPECT_EQ(one.samples[i].label, two.samples[i].label);
  }
  EXPECT_EQ(one.n_positive, 10u);
  EXPECT_EQ(one.n_negative + 0, one.samples.size() - one.n_positive);
}

TEST(Tfidf, IdentityDisjointAndToyCorpus) {
  eval::CorpusStats stats;
  for (const char* d : {"a b", "a c", "d"}) stats.add_document(d);
  EXPECT_EQ(stats.n_documents(), 3u);
  EXPECT_DOUBLE_EQ(stats.idf("a"), std::log(4.0 / 3.0) + 1.0);
  EXPECT_NEAR(eval::sparse_cosine(stats.weigh("a b"), stats.weigh("a c")), 0.366446816266513, 1e-12);
  EXPECT_NEAR(eval::sparse_cosine(stats.weigh("a b"), stats.weigh("a b")), 1.0, 1e-9);
  EXPECT_EQ(eval::sparse_cosine(stats.weigh("a b"), stats.weigh("d")), 0.0);
  EXPECT_EQ(eval::sparse_cosine(stats.weigh("a b"), stats.weigh("--")), 0.0);
}

TEST(BaselineScore, Examples) {
  const Timestamp t = testing::epoch_2024();
  const auto a = rec("a", t, "fix memory leak in parser", {"src/parse/lexer.cc", "src/parse/ast.h"});
  const auto b = rec("b", t, "improve docs for installer", {"src/parse/lexer.cc", "src/parse/ast.h"});
  const auto c = rec("c", t, "fix memory leak", {"tools/x.py"});
  const std::vector<ChangeRecord> corpus{a, b, c};
  const eval::CorpusStats stats(corpus);
  for (Method m : {Method::text_only, Method::file_only, Method::combined})
    EXPECT_NEAR(eval::baseline_score(m, a, a, stats), 1.0, 1e-9) << eval::to_string(m);
  EXPECT_EQ(eval::baseline_score(Method::text_only, a, b, stats), 0.0);
  EXPECT_EQ(eval::baseline_score(Method::file_only, a, b, stats), 1.0);
  EXPECT_EQ(eval::baseline_score(Method::combined, a, b, stats), 0.5);
  for (Method m : {Method::text_only, Method::file_only, Method::combined})
    EXPECT_EQ(eval::baseline_score(m, a, c, stats), eval::baseline_score(m, c, a, stats));
  EXPECT_THROW(eval::baseline_score(Method::learned, a, b, stats), UnknownMethod);
  EXPECT_THROW(eval::parse_method("bm25"), UnknownMethod);
  EXPECT_EQ(eval::parse_method("file_only"), Method::file_only);
}

TEST(Metrics, ReciprocalRankAndRecall) {
  const std::vector<std::string> ranked{"x", "y", "r", "z"};
  EXPECT_EQ(eval::reciprocal_rank(ranked, {"x"}), 1.0);
  EXPECT_EQ(eval::reciprocal_rank(ranked, {"y", "z"}), 0.5);
  EXPECT_EQ(eval::reciprocal_rank(ranked, {"q"}), 0.0);
  EXPECT_FALSE(eval::hit_at_k(ranked, {"r"}, 2));
  EXPECT_TRUE(eval::hit_at_k(ranked, {"r"}, 4));
  EXPECT_FALSE(eval::hit_at_k({}, {"r"}, 10));
  for (std::size_t k : {1, 2, 4, 6, 8, 10}) EXPECT_TRUE(eval::hit_at_k(ranked, {"x"}, k));
  EXPECT_THROW(eval::hit_at_k(ranked, {"x"}, 0), InvalidArgument);

  const std::vector<eval::RankedQuery> qs{{ranked, {"x"}}, {ranked, {"r"}}, {{}, {"r"}}, {ranked, {"q"}}};
  EXPECT_EQ(eval::recall_at_k(qs, 1), 0.25);
  EXPECT_EQ(eval::recall_at_k(qs, 3), 0.5);
  EXPECT_DOUBLE_EQ(eval::mean_reciprocal_rank(qs), (1.0 + 1.0 / 3.0) / 4.0);
  EXPECT_EQ(eval::recall_at_k({}, 1), 0.0);
}

TEST(Metrics, MatchBruteForceOracle) {
  SplitMix64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> ranked;
    const std::size_t n = rng.below(15);
    for (std::size_t i = 0; i < n; ++i) ranked.push_back("k" + std::to_string(i));
    std::unordered_set<std::string> rel;
    const std::size_t nr = rng.below(4);
    for (std::size_t i = 0; i < nr; ++i) rel.insert("k" + std::to_string(rng.below(20)));
    EXPECT_EQ(eval::reciprocal_rank(ranked, rel), oracle::reciprocal_rank(ranked, rel));
    for (std::size_t k : {1, 2, 4, 6, 8, 10}) EXPECT_EQ(eval::hit_at_k(ranked, rel, k), oracle::hit(ranked, rel, k) == 1);
  }
}

class EvaluationTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    model_ = new ForestModel(train_on(testing::make_linked_corpus(120, 12, 1, "t")));
    corpus_ = new testing::SyntheticCorpus(testing::make_linked_corpus(100, 10, 2, "e"));
  }
  static void TearDownTestSuite() {
    delete model_;
    delete corpus_;
  }
  eval::EvalReport run(const testing::SyntheticCorpus& c, const eval::EvalConfig& cfg = {}) const {
    FallbackEmbedder provider;
    EmbeddingCache cache;
    return eval::run_evaluation(c.changes, c.links, model_, provider, cache, cfg);
  }

  static ForestModel* model_;
  static testing::SyntheticCorpus* corpus_;
};
ForestModel* EvaluationTest::model_ = nullptr;
testing::SyntheticCorpus* EvaluationTest::corpus_ = nullptr;

TEST_F(EvaluationTest, PlantedLinksArePerfectForLearnedMethod) {
  const auto report = run(*corpus_);
  ASSERT_EQ(report.cells.size(), 16u);
  for (int w : {7, 14, 30}) {
    const auto* cell = report.find(Method::learned, w);
    ASSERT_NE(cell, nullptr);
    EXPECT_EQ(cell->n_queries, 20u);
    EXPECT_EQ(cell->mrr, 1.0) << "window " << w;
    EXPECT_EQ(cell->recall_at.front().second, 1.0);
  }
}

TEST_F(EvaluationTest, LinksOutsideEveryWindowScoreZero) {
  auto far = *corpus_;
  for (std::size_t i = 1; i < 2 * far.links.size(); i += 2) far.changes[i].created_at += hours{24 * 40};
  for (const auto& cell : run(far).cells) {
    EXPECT_EQ(cell.mrr, 0.0);
    for (const auto& [k, r] : cell.recall_at) EXPECT_EQ(r, 0.0);
  }
}

TEST_F(EvaluationTest, MetricsMatchOracleOnSameRankings) {
  FallbackEmbedder provider;
  EmbeddingCache cache;
  const eval::EvalConfig cfg;
  const auto rankings = eval::rank_for_evaluation(corpus_->changes, corpus_->links, model_, provider, cache, cfg);
  const auto report = run(*corpus_, cfg);
  for (const auto& [days, per_query] : rankings) {
    for (Method m : cfg.methods) {
      double rr = 0.0;
      std::vector<int> hits(cfg.ks.size(), 0);
      for (const auto& q : per_query) {
        rr += oracle::reciprocal_rank(q.ranked.at(m), q.relevant);
        for (std::size_t i = 0; i < cfg.ks.size(); ++i) hits[i] += oracle::hit(q.ranked.at(m), q.relevant, cfg.ks[i]);
      }
      const auto* cell = report.find(m, days);
      ASSERT_NE(cell, nullptr);
      EXPECT_EQ(cell->mrr, rr / double(per_query.size()));
      for (std::size_t i = 0; i < cfg.ks.size(); ++i)
        EXPECT_EQ(cell->recall_at[i].second, double(hits[i]) / double(per_query.size()));
    }
  }
}

TEST_F(EvaluationTest, ReportInvariants) {
  const auto noisy = testing::make_linked_corpus(150, 15, 8, "n");
  auto shuffled = noisy;
  // Blur half the planted pairs so metrics are not saturated.
  for (std::size_t i = 0; i < 2 * shuffled.links.size(); i += 4) {
    shuffled.changes[i].subject = "Rework " + shuffled.changes[i].change_key;
    shuffled.changes[i].description.clear();
    shuffled.changes[i].files = {"misc/" + shuffled.changes[i].change_key + ".txt"};
  }
  const auto report = run(shuffled);
  for (const auto& cell : report.cells) {
    EXPECT_GE(cell.mrr, 0.0);
    EXPECT_LE(cell.mrr, 1.0);
    for (std::size_t i = 1; i < cell.recall_at.size(); ++i) EXPECT_LE(cell.recall_at[i - 1].second, cell.recall_at[i].second);
    // A first hit beyond K still contributes at most 1/(K+1).
    const auto [k, r] = cell.recall_at.back();
    EXPECT_LE(cell.mrr, r + (1.0 - r) / double(k + 1) + 1e-12);
  }
  EXPECT_EQ(eval::to_jsonl(report), eval::to_jsonl(run(shuffled)));
}

TEST_F(EvaluationTest, WiderWindowsKeepRelevantCandidates) {
  FallbackEmbedder provider;
  EmbeddingCache cache;
  eval::EvalConfig cfg;
  cfg.methods = {Method::file_only};
  const auto rankings = eval::rank_for_evaluation(corpus_->changes, corpus_->links, nullptr, provider, cache, cfg);
  for (std::size_t w = 1; w < rankings.size(); ++w) {
    const auto& narrow = rankings[w - 1].second;
    const auto& wide = rankings[w].second;
    ASSERT_EQ(narrow.size(), wide.size());
    for (std::size_t q = 0; q < narrow.size(); ++q) {
      const auto& n = narrow[q].ranked.at(Method::file_only);
      const auto& d = wide[q].ranked.at(Method::file_only);
      EXPECT_LE(n.size(), d.size());
      for (const auto& key : n) EXPECT_NE(std::find(d.begin(), d.end(), key), d.end());
    }
  }
}

TEST_F(EvaluationTest, LearnedBeatsCombinedBeatsWeakerBaseline) {
  const auto report = run(*corpus_);
  for (int w : {2, 7, 14, 30}) {
    const double learned = report.find(Method::learned, w)->mrr;
    const double combined = report.find(Method::combined, w)->mrr;
    const double weaker = std::min(report.find(Method::text_only, w)->mrr, report.find(Method::file_only, w)->mrr);
    EXPECT_GE(learned, combined) << w;
    EXPECT_GE(combined, weaker) << w;
  }
}

TEST_F(EvaluationTest, ConfigValidationAndTables) {
  eval::EvalConfig cfg;
  cfg.ks = {4, 2};
  EXPECT_THROW(run(*corpus_, cfg), InvalidArgument);
  cfg = {};
  cfg.windows = {0};
  EXPECT_THROW(run(*corpus_, cfg), InvalidArgument);
  FallbackEmbedder provider;
  EmbeddingCache cache;
  EXPECT_THROW(eval::run_evaluation(corpus_->changes, corpus_->links, nullptr, provider, cache, {}), InvalidArgument);

  const auto tables = eval::format_tables(run(*corpus_));
  EXPECT_NE(tables.find("MRR by window"), std::string::npos);
  EXPECT_NE(tables.find("Recall@K, window 30 days"), std::string::npos);
  EXPECT_NE(tables.find("learned"), std::string::npos);
}

}  // namespace
}  // namespace patchlink
