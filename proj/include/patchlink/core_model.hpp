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

// Shared domain types and the JSON-Lines dataset formats.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "patchlink/error.hpp"

namespace patchlink {

using Timestamp = std::chrono::sys_seconds;

inline constexpr std::int64_t kSecondsPerDay = 86400;

namespace detail {

inline bool parse_fixed_int(std::string_view s, std::size_t pos, std::size_t len,
                            int& out) {
  if (pos + len > s.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    v = v * 10 + (s[i] - '0');
  }
  out = v;
  return true;
}

// Parses "YYYY-MM-DD?HH:MM:SS" where ? is `sep`, then an optional fraction
// (truncated). Returns the number of characters consumed, or 0 on failure.
inline std::size_t parse_date_time(std::string_view s, char sep, Timestamp& out) {
  int y, mo, d, h, mi, se;
  if (s.size() < 19 || s[4] != '-' || s[7] != '-' || s[10] != sep ||
      s[13] != ':' || s[16] != ':')
    return 0;
  if (!parse_fixed_int(s, 0, 4, y) || !parse_fixed_int(s, 5, 2, mo) ||
      !parse_fixed_int(s, 8, 2, d) || !parse_fixed_int(s, 11, 2, h) ||
      !parse_fixed_int(s, 14, 2, mi) || !parse_fixed_int(s, 17, 2, se))
    return 0;
  if (h > 23 || mi > 59 || se > 59) return 0;
  const std::chrono::year_month_day ymd{std::chrono::year{y},
                                        std::chrono::month{unsigned(mo)},
                                        std::chrono::day{unsigned(d)}};
  if (!ymd.ok()) return 0;
  std::size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    const std::size_t digits_begin = pos;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
    if (pos == digits_begin) return 0;
  }
  out = std::chrono::sys_days{ymd} + std::chrono::hours{h} +
        std::chrono::minutes{mi} + std::chrono::seconds{se};
  return pos;
}

}  // namespace detail

/// Parses an ISO-8601 UTC instant such as `2024-03-01T12:00:00Z`.
/// Fractional seconds are accepted and truncated.
inline std::optional<Timestamp> parse_iso8601(std::string_view text) {
  Timestamp ts;
  const std::size_t used = detail::parse_date_time(text, 'T', ts);
  if (used == 0 || used + 1 != text.size() || text[used] != 'Z')
    return std::nullopt;
  return ts;
}

inline std::string format_iso8601(Timestamp ts) {
  const auto day = std::chrono::floor<std::chrono::days>(ts);
  const std::chrono::year_month_day ymd{day};
  const std::chrono::hh_mm_ss hms{ts - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ",
                int(ymd.year()), unsigned(ymd.month()), unsigned(ymd.day()),
                int(hms.hours().count()), int(hms.minutes().count()),
                int(hms.seconds().count()));
  return buf;
}

/// Canonical repository-relative path: `/` separators, no empty, leading or
/// trailing separators, and no `.` or `..` segments.
inline std::string normalize_path(std::string_view raw) {
  if (raw.empty()) throw EmptyPath();
  std::string out;
  out.reserve(raw.size());
  std::string segment;
  auto flush = [&] {
    if (segment.empty()) return;
    if (segment == "." || segment == "..") throw UnsafeSegment(segment);
    if (!out.empty()) out.push_back('/');
    out += segment;
    segment.clear();
  };
  for (char c : raw) {
    if (c == '/' || c == '\\')
      flush();
    else
      segment.push_back(c);
  }
  flush();
  if (out.empty()) throw EmptyPath();
  return out;
}

/// Normalizes every path and drops later duplicates, keeping first-seen order.
inline std::vector<std::string> normalize_files(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  out.reserve(raw.size());
  for (const auto& p : raw) {
    std::string n = normalize_path(p);
    if (seen.insert(n).second) out.push_back(std::move(n));
  }
  return out;
}

struct ChangeRecord {
  std::string change_key;
  std::string project;
  std::string subject;
  std::string description;
  Timestamp created_at{};
  std::vector<std::string> files;  // normalized, unique, in first-seen order
  std::optional<std::string> url;

  /// Text handed to the embedder.
  std::string text() const { return subject + "\n" + description; }

  friend bool operator==(const ChangeRecord&, const ChangeRecord&) = default;
};

enum class WindowMode { symmetric, lookback };

inline std::string_view to_string(WindowMode m) {
  return m == WindowMode::symmetric ? "symmetric" : "lookback";
}

inline std::optional<WindowMode> parse_window_mode(std::string_view s) {
  if (s == "symmetric") return WindowMode::symmetric;
  if (s == "lookback") return WindowMode::lookback;
  return std::nullopt;
}

struct WindowConfig {
  static constexpr int kMinDays = 1;
  static constexpr int kMaxDays = 365;
  static constexpr int kDefaultDays = 14;

  int days = kDefaultDays;
  WindowMode mode = WindowMode::symmetric;

  static bool valid_days(long long d) { return d >= kMinDays && d <= kMaxDays; }

  std::chrono::seconds half_width() const {
    return std::chrono::seconds{std::int64_t{days} * kSecondsPerDay};
  }

  /// Whether `candidate` lies inside the window anchored at `target`.
  /// Both bounds are inclusive.
  bool contains(Timestamp target, Timestamp candidate) const {
    const auto delta = candidate - target;
    if (mode == WindowMode::lookback)
      return delta <= std::chrono::seconds{0} && -delta <= half_width();
    return (delta < std::chrono::seconds{0} ? -delta : delta) <= half_width();
  }
};

struct CandidateSet {
  ChangeRecord target;
  std::vector<ChangeRecord> candidates;
  WindowConfig window;
};

/// Unordered link between two changes, stored with a < b.
struct LinkLabel {
  std::string a;
  std::string b;

  static LinkLabel make(std::string x, std::string y) {
    if (x == y) throw SelfLink(x);
    if (y < x) std::swap(x, y);
    return LinkLabel{std::move(x), std::move(y)};
  }

  friend auto operator<=>(const LinkLabel&, const LinkLabel&) = default;
};

// --- JSON mapping ---------------------------------------------------------

inline nlohmann::json to_json(const ChangeRecord& c) {
  nlohmann::json j{{"change_key", c.change_key},
                   {"project", c.project},
                   {"subject", c.subject},
                   {"description", c.description},
                   {"created_at", format_iso8601(c.created_at)},
                   {"files", c.files}};
  if (c.url) j["url"] = *c.url;
  return j;
}

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const char* field,
                                     std::size_t line_no) {
  auto it = j.find(field);
  if (it == j.end()) throw MalformedLine(line_no, std::string("missing '") + field + "'");
  return *it;
}

inline std::string require_string(const nlohmann::json& j, const char* field,
                                  std::size_t line_no) {
  const auto& v = require(j, field, line_no);
  if (!v.is_string())
    throw MalformedLine(line_no, std::string("'") + field + "' must be a string");
  return v.get<std::string>();
}

}  // namespace detail

/// Decodes one change object. `line_no` is used only for error reporting.
inline ChangeRecord change_from_json(const nlohmann::json& j, std::size_t line_no = 0) {
  if (!j.is_object()) throw MalformedLine(line_no, "expected a JSON object");
  ChangeRecord c;
  c.change_key = detail::require_string(j, "change_key", line_no);
  if (c.change_key.empty()) throw MalformedLine(line_no, "empty change_key");
  c.project = detail::require_string(j, "project", line_no);
  c.subject = detail::require_string(j, "subject", line_no);
  if (auto it = j.find("description"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw MalformedLine(line_no, "'description' must be a string");
    c.description = it->get<std::string>();
  }
  const std::string created = detail::require_string(j, "created_at", line_no);
  auto ts = parse_iso8601(created);
  if (!ts) throw BadTimestamp(line_no, created);
  c.created_at = *ts;

  const auto& files = detail::require(j, "files", line_no);
  if (!files.is_array()) throw MalformedLine(line_no, "'files' must be an array");
  std::vector<std::string> raw;
  raw.reserve(files.size());
  for (const auto& f : files) {
    if (!f.is_string()) throw MalformedLine(line_no, "'files' entries must be strings");
    raw.push_back(f.get<std::string>());
  }
  try {
    c.files = normalize_files(raw);
  } catch (const Error& e) {
    throw MalformedLine(line_no, e.what());
  }
  if (auto it = j.find("url"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw MalformedLine(line_no, "'url' must be a string");
    c.url = it->get<std::string>();
  }
  return c;
}

namespace detail {

inline bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char ch) {
    return ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n';
  });
}

template <typename Fn>
void for_each_jsonl(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw MalformedLine(line_no, e.what());
    }
    fn(j, line_no);
  }
}

}  // namespace detail

/// Reads a `changes.jsonl` stream. Blank lines are skipped.
inline std::vector<ChangeRecord> parse_changes_file(std::istream& in) {
  std::vector<ChangeRecord> out;
  std::unordered_set<std::string> keys;
  detail::for_each_jsonl(in, [&](const nlohmann::json& j, std::size_t line_no) {
    ChangeRecord c = change_from_json(j, line_no);
    if (!keys.insert(c.change_key).second) throw DuplicateKey(c.change_key);
    out.push_back(std::move(c));
  });
  return out;
}

inline void write_changes_file(std::ostream& out, const std::vector<ChangeRecord>& changes) {
  for (const auto& c : changes) out << to_json(c).dump() << '\n';
}

/// Reads a `links.jsonl` stream: canonicalized, deduplicated, first-seen order.
inline std::vector<LinkLabel> parse_links_file(std::istream& in) {
  std::vector<LinkLabel> out;
  std::set<LinkLabel> seen;
  detail::for_each_jsonl(in, [&](const nlohmann::json& j, std::size_t line_no) {
    if (!j.is_object()) throw MalformedLine(line_no, "expected a JSON object");
    std::string a = detail::require_string(j, "a", line_no);
    std::string b = detail::require_string(j, "b", line_no);
    if (a.empty() || b.empty()) throw MalformedLine(line_no, "empty change_key");
    LinkLabel l = LinkLabel::make(std::move(a), std::move(b));
    if (seen.insert(l).second) out.push_back(std::move(l));
  });
  return out;
}

inline void write_links_file(std::ostream& out, const std::vector<LinkLabel>& links) {
  for (const auto& l : links) out << nlohmann::json{{"a", l.a}, {"b", l.b}}.dump() << '\n';
}

}  // namespace patchlink
