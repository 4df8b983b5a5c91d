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

#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "patchlink/gerrit_client.hpp"
#include "patchlink/logging.hpp"
#include "support/stub_gerrit.hpp"
#include "support/synthetic.hpp"

namespace patchlink {
namespace {

using gerrit::GerritClient;
using gerrit::GerritConfig;

std::string fixture(const std::string& name) {
  std::ifstream in(std::string(PATCHLINK_FIXTURE_DIR) + "/gerrit/" + name, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

GerritConfig config_for(const testing::StubGerrit& stub) {
  GerritConfig cfg;
  cfg.base_url = stub.url() + "/";
  cfg.timeout = std::chrono::seconds{5};
  return cfg;
}

TEST(StripXssiPrefix, RemovesPrefixAndNewline) {
  EXPECT_EQ(gerrit::strip_xssi_prefix(")]}'\n[{\"_number\":1}]"), "[{\"_number\":1}]");
  EXPECT_EQ(gerrit::strip_xssi_prefix(")]}'\r\n[]"), "[]");
  EXPECT_EQ(gerrit::strip_xssi_prefix(")]}'[]"), "[]");
}

TEST(StripXssiPrefix, LeavesOtherBodiesAlone) {
  EXPECT_EQ(gerrit::strip_xssi_prefix("[{\"_number\":1}]"), "[{\"_number\":1}]");
  EXPECT_EQ(gerrit::strip_xssi_prefix(")]}"), ")]}");
  EXPECT_EQ(gerrit::strip_xssi_prefix(""), "");
}

TEST(StripXssiPrefix, BareMagicBecomesEmpty) { EXPECT_EQ(gerrit::strip_xssi_prefix(fixture("xssi_only.txt")), ""); }

TEST(StripXssiPrefix, RecordedResponse) {
  const std::string raw = fixture("query_two_changes.txt");
  ASSERT_EQ(raw.substr(0, 5), ")]}'\n");
  const std::string body = gerrit::strip_xssi_prefix(raw);
  EXPECT_EQ(body, raw.substr(5));
  EXPECT_EQ(nlohmann::json::parse(body).size(), 2u);
}

TEST(Timestamp, GerritFormat) {
  EXPECT_EQ(format_iso8601(*gerrit::parse_timestamp("2024-03-01 12:00:00.000000000")), "2024-03-01T12:00:00Z");
  EXPECT_EQ(format_iso8601(*gerrit::parse_timestamp("2024-02-27 09:30:12.123456789")), "2024-02-27T09:30:12Z");
  EXPECT_FALSE(gerrit::parse_timestamp("2024-03-01T12:00:00Z"));
  EXPECT_EQ(gerrit::format_timestamp(*parse_iso8601("2024-03-01T12:00:00Z")), "2024-03-01 12:00:00");
}

TEST(DescriptionFromMessage, StripsSubjectAndFooters) {
  EXPECT_EQ(gerrit::description_from_message("Fix leak\n\nLong body\n\nChange-Id: I123"), "Long body");
  EXPECT_EQ(gerrit::description_from_message("Fix leak\n\nChange-Id: I123\nSigned-off-by: A <a@b>\n"), "");
  EXPECT_EQ(gerrit::description_from_message("Fix leak"), "");
  EXPECT_EQ(gerrit::description_from_message("Fix leak\n\nPara one\nline two\n\nPara two\n"), "Para one\nline two\n\nPara two");
  // A final paragraph that is not entirely footers stays.
  EXPECT_EQ(gerrit::description_from_message("S\n\nBody\n\nSee: the docs\nand more prose"), "Body\n\nSee: the docs\nand more prose");
  EXPECT_EQ(gerrit::description_from_message("S\r\n\r\nBody\r\n\r\nChange-Id: I1\r\n"), "Body");
}

TEST(NormalizeChange, MinimalChangeInfo) {
  const auto raw = nlohmann::json::parse(fixture("minimal_change.json"));
  const auto c = gerrit::normalize_change(raw, "https://review.example.org/");
  EXPECT_EQ(c.change_key, "17");
  EXPECT_EQ(c.project, "demo");
  EXPECT_EQ(c.subject, "Add CONTRIBUTING notes");
  EXPECT_EQ(c.description, "");
  EXPECT_TRUE(c.files.empty());
  EXPECT_EQ(format_iso8601(c.created_at), "2024-03-01T12:00:00Z");
  EXPECT_EQ(c.url, "https://review.example.org/c/demo/+/17");
}

TEST(NormalizeChange, RecordedDetail) {
  const auto raw = nlohmann::json::parse(gerrit::strip_xssi_prefix(fixture("change_910001_detail.txt")));
  const auto c = gerrit::normalize_change(raw, "https://review.example.org");
  EXPECT_EQ(c.change_key, "910001");
  EXPECT_EQ(c.project, "openstack/nova");
  EXPECT_EQ(c.files, (std::vector<std::string>{"nova/compute/manager.py", "nova/conductor/tasks/live_migrate.py",
                                               "nova/tests/unit/compute/test_compute_mgr.py"}));
  EXPECT_EQ(c.description, "The rollback path did not release the port binding on the\ndestination host.");
  EXPECT_EQ(c.url, "https://review.example.org/c/openstack/nova/+/910001");
}

TEST(NormalizeChange, MissingFields) {
  auto raw = nlohmann::json::parse(fixture("minimal_change.json"));
  raw.erase("_number");
  EXPECT_THROW(gerrit::normalize_change(raw, "http://x"), MissingField);
  raw = nlohmann::json::parse(fixture("minimal_change.json"));
  raw["created"] = "yesterday";
  EXPECT_THROW(gerrit::normalize_change(raw, "http://x"), BadTimestamp);
}

TEST(GerritConfig, Validation) {
  GerritConfig cfg;
  cfg.base_url = "https://review.example.org///";
  EXPECT_EQ(cfg.normalized().base_url, "https://review.example.org");
  cfg.username = "bot";
  EXPECT_THROW(cfg.normalized(), InvalidArgument);
  cfg.base_url = "review.example.org";
  cfg.http_password = "pw";
  EXPECT_THROW(cfg.normalized(), InvalidArgument);
}

TEST(QueryChanges, ReplaysRecordedBody) {
  testing::StubGerrit stub;
  stub.set_raw_query_body(fixture("query_two_changes.txt"));
  GerritClient client(config_for(stub));
  const auto t = *parse_iso8601("2024-03-01T00:00:00Z");
  const auto out = client.query_changes("openstack/nova", t - std::chrono::hours{240}, t, 50);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].change_key, "910001");
  EXPECT_EQ(out[1].change_key, "909876");
  EXPECT_EQ(out[1].files, std::vector<std::string>{"nova/compute/manager.py"});
  EXPECT_EQ(out[1].description, "");

  const auto reqs = stub.requests();
  ASSERT_EQ(reqs.size(), 1u);
  EXPECT_EQ(reqs[0].path, "/changes/");
  const std::string& q = reqs[0].query;
  EXPECT_NE(q.find("q=project:openstack%2Fnova+after:%222024-02-20+00:00:00%22+before:%222024-03-01+00:00:00%22"),
            std::string::npos)
      << q;
  for (const char* opt : {"o=CURRENT_REVISION", "o=CURRENT_FILES", "o=DETAILED_ACCOUNTS", "n=50"})
    EXPECT_NE(q.find(opt), std::string::npos) << opt;
}

TEST(QueryChanges, PrefixedEmptyList) {
  testing::StubGerrit stub;
  stub.set_raw_query_body(fixture("query_empty.txt"));
  GerritClient client(config_for(stub));
  const auto t = testing::epoch_2024();
  EXPECT_TRUE(client.query_changes("demo", t, t, 10).empty());
}

TEST(QueryChanges, FollowsMoreChangesMarker) {
  testing::StubGerrit stub;
  const auto corpus = testing::make_linked_corpus(23, 0, 1);
  for (const auto& c : corpus.changes) stub.add(c);
  stub.set_page_size(5);
  GerritClient client(config_for(stub));
  const auto t = testing::epoch_2024();
  const auto all = client.query_changes("demo", t, t, 100);
  EXPECT_EQ(all.size(), 23u);
  EXPECT_EQ(stub.requests().size(), 5u);
  EXPECT_NE(stub.requests()[1].query.find("S=5"), std::string::npos);
  const auto some = client.query_changes("demo", t, t, 7);
  EXPECT_EQ(some.size(), 7u);
  for (const auto& c : all)
    for (const auto& f : c.files) EXPECT_NE(f, "/COMMIT_MSG");
}

TEST(QueryChanges, ErrorsMapToTypes) {
  testing::StubGerrit stub;
  GerritConfig cfg = config_for(stub);
  cfg.username = "bot";
  cfg.http_password = "s3cret-pw";
  GerritClient client(cfg);
  const auto t = testing::epoch_2024();
  stub.force_status(401);
  EXPECT_THROW(client.query_changes("demo", t, t, 5), AuthRequired);
  stub.force_status(403);
  EXPECT_THROW(client.query_changes("demo", t, t, 5), AuthRequired);
  stub.force_status(500);
  EXPECT_THROW(client.query_changes("demo", t, t, 5), HttpError);
  stub.force_status(std::nullopt);
  stub.set_raw_query_body(")]}'\n{not json");
  EXPECT_THROW(client.query_changes("demo", t, t, 5), DecodeError);
  EXPECT_THROW(client.query_changes("demo", t + std::chrono::seconds{1}, t, 5), InvalidArgument);
}

TEST(QueryChanges, UnreachableHost) {
  GerritConfig cfg;
  cfg.base_url = "http://127.0.0.1:1";
  cfg.timeout = std::chrono::seconds{2};
  GerritClient client(cfg);
  const auto t = testing::epoch_2024();
  EXPECT_THROW(client.query_changes("demo", t, t, 5), GerritError);
}

TEST(GetChange, RecordedDetailAndPath) {
  testing::StubGerrit stub;
  stub.set_raw_change_body("910001", fixture("change_910001_detail.txt"));
  GerritClient client(config_for(stub));
  const auto c = client.get_change("910001");
  EXPECT_EQ(c.files.size(), 3u);
  const auto reqs = stub.requests();
  ASSERT_EQ(reqs.size(), 1u);
  EXPECT_EQ(reqs[0].path, "/changes/910001");
  EXPECT_NE(reqs[0].query.find("o=COMMIT_FOOTERS"), std::string::npos);
  EXPECT_NE(reqs[0].query.find("o=CURRENT_FILES"), std::string::npos);
}

TEST(GetChange, UnknownIdIsNotFound) {
  testing::StubGerrit stub;
  GerritClient client(config_for(stub));
  EXPECT_THROW(client.get_change("424242"), NotFound);
}

TEST(GetChange, ByChangeIdExcludesPseudoFiles) {
  testing::StubGerrit stub;
  auto c = testing::make_linked_corpus(1, 0, 2).changes[0];
  const auto number = stub.add(c);
  GerritClient client(config_for(stub));
  const auto got = client.get_change("I" + std::to_string(number));
  EXPECT_EQ(got.files, c.files);
  EXPECT_EQ(got.description, c.description);
  EXPECT_EQ(got.created_at, c.created_at);
}

TEST(GerritClient, AuthenticatedUsesPrefixAndNeverLeaksPassword) {
  testing::StubGerrit stub;
  stub.add(testing::make_linked_corpus(1, 0, 2).changes[0]);
  GerritConfig cfg = config_for(stub);
  cfg.username = "bot";
  cfg.http_password = "s3cret-pw";
  GerritClient client(cfg);

  std::vector<std::string> logged;
  auto previous = log::set_sink([&](log::Level, std::string_view m) { logged.emplace_back(m); });
  log::set_level(log::Level::debug);
  std::vector<std::string> errors;
  client.get_change("1000");
  const auto t = testing::epoch_2024();
  client.query_changes("demo", t, t, 5);
  stub.force_status(401);
  try {
    client.get_change("1000");
  } catch (const Error& e) {
    errors.emplace_back(e.what());
  }
  log::set_level(log::Level::info);
  log::set_sink(previous);

  ASSERT_FALSE(logged.empty());
  for (const auto& line : logged) EXPECT_EQ(line.find("s3cret-pw"), std::string::npos) << line;
  ASSERT_EQ(errors.size(), 1u);
  EXPECT_EQ(errors[0].find("s3cret-pw"), std::string::npos);
  for (const auto& r : stub.requests()) {
    EXPECT_EQ(r.method, "GET");
    EXPECT_EQ(r.path.rfind("/a/changes/", 0), 0u) << r.path;
    EXPECT_EQ(r.authorization.rfind("Basic ", 0), 0u);
  }
}

TEST(GerritClient, OnlyIssuesGets) {
  testing::StubGerrit stub;
  for (const auto& c : testing::make_linked_corpus(12, 2, 4).changes) stub.add(c);
  GerritClient client(config_for(stub));
  const auto t = testing::epoch_2024();
  client.query_changes("demo", t, t, 100);
  client.get_change("1003");
  EXPECT_THROW(client.get_change("9"), NotFound);
  for (const auto& r : stub.requests()) EXPECT_EQ(r.method, "GET");
}

}  // namespace
}  // namespace patchlink
