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

// Read-only Gerrit REST client producing normalized ChangeRecords.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "patchlink/core_model.hpp"
#include "patchlink/error.hpp"
#include "patchlink/logging.hpp"

namespace patchlink::gerrit {

/// Gerrit's anti-XSSI guard line.
inline constexpr std::string_view kXssiPrefix = ")]}'";

/// Removes a leading `)]}'` and one following newline, if present.
inline std::string strip_xssi_prefix(std::string_view body) {
  if (body.substr(0, kXssiPrefix.size()) != kXssiPrefix) return std::string(body);
  body.remove_prefix(kXssiPrefix.size());
  if (body.substr(0, 2) == "\r\n")
    body.remove_prefix(2);
  else if (body.substr(0, 1) == "\n")
    body.remove_prefix(1);
  return std::string(body);
}

/// Synthetic entries Gerrit lists alongside real files.
inline bool is_pseudo_file(std::string_view path) {
  return path == "/COMMIT_MSG" || path == "/MERGE_LIST" || path == "/PATCHSET_LEVEL";
}

/// Parses Gerrit's `YYYY-MM-DD HH:MM:SS[.nnnnnnnnn]` UTC timestamps.
inline std::optional<Timestamp> parse_timestamp(std::string_view text) {
  Timestamp ts;
  const std::size_t used = patchlink::detail::parse_date_time(text, ' ', ts);
  if (used == 0 || used != text.size()) return std::nullopt;
  return ts;
}

inline std::string format_timestamp(Timestamp ts) {
  std::string iso = format_iso8601(ts);  // 2024-03-01T12:00:00Z
  iso[10] = ' ';
  iso.pop_back();
  return iso;
}

namespace detail {

inline std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

inline bool is_blank(std::string_view s) {
  return s.find_first_not_of(" \t") == std::string_view::npos;
}

/// `Token: value` where token is letters, digits and dashes.
inline bool is_footer_line(std::string_view line) {
  const std::size_t colon = line.find(':');
  if (colon == 0 || colon == std::string_view::npos) return false;
  for (std::size_t i = 0; i < colon; ++i) {
    const char c = line[i];
    const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
                    (c == '-' && i > 0);
    if (!ok) return false;
  }
  return colon + 1 < line.size() && line[colon + 1] == ' ';
}

}  // namespace detail

/// Commit message body: subject line removed, and the final paragraph removed
/// when it consists only of `Key: value` footers (Change-Id, Signed-off-by...).
inline std::string description_from_message(std::string_view message) {
  auto lines = detail::split_lines(message);
  if (lines.empty()) return {};
  lines.erase(lines.begin());  // subject

  auto trim = [&] {
    while (!lines.empty() && detail::is_blank(lines.back())) lines.pop_back();
    while (!lines.empty() && detail::is_blank(lines.front())) lines.erase(lines.begin());
  };
  trim();
  if (lines.empty()) return {};

  std::size_t para = lines.size();
  while (para > 0 && !detail::is_blank(lines[para - 1])) --para;
  const bool all_footers = std::all_of(lines.begin() + static_cast<std::ptrdiff_t>(para), lines.end(),
                                       [&](std::string_view l) {
                                         // Indented lines continue the previous footer.
                                         return detail::is_footer_line(l) ||
                                                (!l.empty() && (l[0] == ' ' || l[0] == '\t'));
                                       });
  if (all_footers && detail::is_footer_line(lines[para])) {
    lines.resize(para);
    trim();
  }

  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) out.push_back('\n');
    out.append(lines[i]);
  }
  return out;
}

/// Maps a decoded ChangeInfo object to a ChangeRecord. `base_url` is used to
/// build the web link.
inline ChangeRecord normalize_change(const nlohmann::json& raw, std::string_view base_url) {
  if (!raw.is_object()) throw DecodeError("ChangeInfo is not an object");
  auto field = [&](const char* name) -> const nlohmann::json& {
    auto it = raw.find(name);
    if (it == raw.end() || it->is_null()) throw MissingField(name);
    return *it;
  };
  ChangeRecord c;
  try {
    const auto& number = field("_number");
    c.change_key = number.is_string() ? number.get<std::string>() : std::to_string(number.get<std::int64_t>());
    c.project = field("project").get<std::string>();
    c.subject = field("subject").get<std::string>();
    const auto created = field("created").get<std::string>();
    const auto ts = parse_timestamp(created);
    if (!ts) throw BadTimestamp(0, created);
    c.created_at = *ts;

    const nlohmann::json* revision = nullptr;
    if (auto cur = raw.find("current_revision"); cur != raw.end() && cur->is_string()) {
      if (auto revs = raw.find("revisions"); revs != raw.end() && revs->is_object()) {
        if (auto r = revs->find(cur->get<std::string>()); r != revs->end()) revision = &*r;
      }
    }
    if (revision) {
      if (auto files = revision->find("files"); files != revision->end() && files->is_object()) {
        std::vector<std::string> raw_files;
        for (const auto& [path, info] : files->items())
          if (!is_pseudo_file(path)) raw_files.push_back(path);
        try {
          c.files = normalize_files(raw_files);
        } catch (const Error& e) {
          throw DecodeError(std::string("bad file path: ") + e.what());
        }
      }
      std::optional<std::string> message;
      if (auto commit = revision->find("commit"); commit != revision->end() && commit->is_object())
        if (auto m = commit->find("message"); m != commit->end() && m->is_string())
          message = m->get<std::string>();
      if (!message)
        if (auto m = revision->find("commit_with_footers"); m != revision->end() && m->is_string())
          message = m->get<std::string>();
      if (message) c.description = description_from_message(*message);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(e.what());
  }
  std::string base(base_url);
  while (!base.empty() && base.back() == '/') base.pop_back();
  c.url = base + "/c/" + c.project + "/+/" + c.change_key;
  return c;
}

struct GerritConfig {
  std::string base_url;
  std::optional<std::string> username;
  std::optional<std::string> http_password;
  std::chrono::seconds timeout{30};
  std::size_t max_changes = 500;  // per query, across pages
  std::ptrdiff_t max_concurrency = 4;

  /// Strips trailing slashes and checks the credential pairing.
  GerritConfig normalized() const {
    GerritConfig c = *this;
    while (!c.base_url.empty() && c.base_url.back() == '/') c.base_url.pop_back();
    if (c.base_url.rfind("http://", 0) != 0 && c.base_url.rfind("https://", 0) != 0)
      throw InvalidArgument("gerrit base_url must be an absolute http(s) URL");
    if (c.username.has_value() != c.http_password.has_value())
      throw InvalidArgument("gerrit username and http password must be given together");
    if (c.max_changes == 0 || c.max_concurrency <= 0)
      throw InvalidArgument("gerrit limits must be positive");
    return c;
  }

  bool authenticated() const { return username.has_value(); }
};

/// RFC 3986 percent-encoding; unreserved characters pass through, and in
/// query mode spaces become `+` and `:` is kept for readability.
inline std::string percent_encode(std::string_view s, bool query = false) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    const bool unreserved = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
                            (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.' || c == '~';
    if (unreserved || (query && c == ':')) {
      out.push_back(static_cast<char>(c));
    } else if (query && c == ' ') {
      out.push_back('+');
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 15]);
    }
  }
  return out;
}

/// Search expression for changes updated inside [after, before], limited to
/// `project` unless it is empty.
inline std::string change_query(std::string_view project, Timestamp after, Timestamp before) {
  std::string q;
  if (!project.empty()) q = "project:" + std::string(project) + " ";
  return q + "after:\"" + format_timestamp(after) + "\" before:\"" + format_timestamp(before) + "\"";
}

inline constexpr const char* kQueryOptions =
    "o=CURRENT_REVISION&o=CURRENT_FILES&o=CURRENT_COMMIT&o=DETAILED_ACCOUNTS";
inline constexpr const char* kDetailOptions =
    "o=CURRENT_REVISION&o=CURRENT_FILES&o=CURRENT_COMMIT&o=COMMIT_FOOTERS";

/// Issues GET requests only. Safe for concurrent use; at most
/// `max_concurrency` requests are in flight at once.
class GerritClient {
 public:
  explicit GerritClient(GerritConfig config)
      : cfg_(config.normalized()),
        slots_(std::make_unique<std::counting_semaphore<64>>(std::min<std::ptrdiff_t>(cfg_.max_concurrency, 64))) {
    // Split "https://host[:port]/prefix" into origin and path prefix.
    const std::size_t scheme_end = cfg_.base_url.find("://") + 3;
    const std::size_t path_start = cfg_.base_url.find('/', scheme_end);
    origin_ = cfg_.base_url.substr(0, path_start);
    prefix_ = path_start == std::string::npos ? "" : cfg_.base_url.substr(path_start);
    if (cfg_.authenticated()) prefix_ += "/a";
  }

  const GerritConfig& config() const { return cfg_; }

  /// Changes of `project` whose update time falls in [after, before], in
  /// server order, following `_more_changes` until `limit` is reached.
  std::vector<ChangeRecord> query_changes(const std::string& project, Timestamp after, Timestamp before,
                                          std::size_t limit) const {
    if (after > before) throw InvalidArgument("query window: after must not exceed before");
    if (limit == 0) throw InvalidArgument("query limit must be positive");
    limit = std::min(limit, cfg_.max_changes);
    const std::string q = percent_encode(change_query(project, after, before), true);
    std::vector<ChangeRecord> out;
    for (;;) {
      std::string path = prefix_ + "/changes/?q=" + q + "&" + kQueryOptions +
                         "&n=" + std::to_string(limit - out.size());
      if (!out.empty()) path += "&S=" + std::to_string(out.size());
      const auto doc = get_json(path, std::nullopt);
      if (!doc.is_array()) throw DecodeError("change query did not return an array");
      bool more = false;
      for (const auto& item : doc) {
        if (out.size() >= limit) break;
        out.push_back(normalize_change(item, cfg_.base_url));
        more = item.value("_more_changes", false);
      }
      if (!more || doc.empty() || out.size() >= limit) break;
    }
    return out;
  }

  /// Looks up one change by numeric id, Change-Id, or `project~number`.
  ChangeRecord get_change(const std::string& change_id) const {
    if (change_id.empty()) throw InvalidArgument("empty change id");
    const std::string path = prefix_ + "/changes/" + percent_encode(change_id) + "?" + kDetailOptions;
    const auto doc = get_json(path, change_id);
    return normalize_change(doc, cfg_.base_url);
  }

 private:
  nlohmann::json get_json(const std::string& path, const std::optional<std::string>& lookup_id) const {
    httplib::Result res = [&] {
      slots_->acquire();
      struct Release {
        std::counting_semaphore<64>* s;
        ~Release() { s->release(); }
      } release{slots_.get()};
      httplib::Client client(origin_);
      client.set_connection_timeout(cfg_.timeout);
      client.set_read_timeout(cfg_.timeout);
      client.set_write_timeout(cfg_.timeout);
      client.set_url_encode(false);  // paths are encoded above
      if (cfg_.authenticated()) client.set_basic_auth(*cfg_.username, *cfg_.http_password);
      log::debug("GET " + origin_ + path);
      return client.Get(path, httplib::Headers{{"Accept", "application/json"}});
    }();

    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
        throw Timeout(origin_ + path + " (" + httplib::to_string(err) + ")");
      throw Unreachable(origin_ + " (" + httplib::to_string(err) + ")");
    }
    const int status = res->status;
    if (status == 401 || status == 403) throw AuthRequired(status);
    if (status == 404 && lookup_id) throw NotFound(*lookup_id);
    if (status != 200) {
      std::string detail = strip_xssi_prefix(res->body);
      if (detail.size() > 200) detail.resize(200);
      throw HttpError(status, detail);
    }
    try {
      return nlohmann::json::parse(strip_xssi_prefix(res->body));
    } catch (const nlohmann::json::exception& e) {
      throw DecodeError(e.what());
    }
  }

  GerritConfig cfg_;
  std::unique_ptr<std::counting_semaphore<64>> slots_;
  std::string origin_;
  std::string prefix_;
};

}  // namespace patchlink::gerrit
