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

// Minimal process-wide log sink. Defaults to stderr; tests swap it out.

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace patchlink::log {

enum class Level { debug, info, warn, error };

using Sink = std::function<void(Level, std::string_view)>;

namespace detail {

struct State {
  std::mutex mu;
  Level threshold = Level::info;
  Sink sink = [](Level level, std::string_view msg) {
    static constexpr const char* kNames[] = {"debug", "info", "warn", "error"};
    std::cerr << "[patchlink " << kNames[static_cast<int>(level)] << "] " << msg << '\n';
  };
};

inline State& state() {
  static State s;
  return s;
}

}  // namespace detail

/// Installs `sink` and returns the previous one.
inline Sink set_sink(Sink sink) {
  auto& s = detail::state();
  std::lock_guard lock(s.mu);
  std::swap(s.sink, sink);
  return sink;
}

inline void set_level(Level level) {
  auto& s = detail::state();
  std::lock_guard lock(s.mu);
  s.threshold = level;
}

inline void write(Level level, std::string_view msg) {
  auto& s = detail::state();
  std::lock_guard lock(s.mu);
  if (level < s.threshold || !s.sink) return;
  s.sink(level, msg);
}

inline void debug(std::string_view msg) { write(Level::debug, msg); }
inline void info(std::string_view msg) { write(Level::info, msg); }
inline void warn(std::string_view msg) { write(Level::warn, msg); }
inline void error(std::string_view msg) { write(Level::error, msg); }

}  // namespace patchlink::log
