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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace patchlink {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- dataset / core model -------------------------------------------------

class MalformedLine : public Error {
 public:
  MalformedLine(std::size_t line_no, const std::string& detail)
      : Error((line_no ? "malformed line " + std::to_string(line_no) : std::string("malformed record")) + ": " +
              detail),
        line_no_(line_no) {}
  std::size_t line_no() const noexcept { return line_no_; }

 private:
  std::size_t line_no_;
};

class DuplicateKey : public Error {
 public:
  explicit DuplicateKey(std::string key)
      : Error("duplicate change_key: " + key), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class BadTimestamp : public Error {
 public:
  BadTimestamp(std::size_t line_no, const std::string& text)
      : Error("bad timestamp '" + text + "'" +
              (line_no ? " on line " + std::to_string(line_no) : "")),
        line_no_(line_no) {}
  std::size_t line_no() const noexcept { return line_no_; }

 private:
  std::size_t line_no_;
};

class SelfLink : public Error {
 public:
  explicit SelfLink(std::string key)
      : Error("self-link on change_key: " + key), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class EmptyPath : public Error {
 public:
  EmptyPath() : Error("empty path") {}
};

class UnsafeSegment : public Error {
 public:
  explicit UnsafeSegment(std::string segment)
      : Error("unsafe path segment: '" + segment + "'"),
        segment_(std::move(segment)) {}
  const std::string& segment() const noexcept { return segment_; }

 private:
  std::string segment_;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// --- numeric --------------------------------------------------------------

class DimensionMismatch : public Error {
 public:
  DimensionMismatch(std::size_t expected, std::size_t found)
      : Error("dimension mismatch: " + std::to_string(expected) + " vs " +
              std::to_string(found)) {}
};

// --- embedding ------------------------------------------------------------

class ProviderFailure : public Error {
 public:
  explicit ProviderFailure(const std::string& detail)
      : Error("embedding provider failure: " + detail) {}
};

// --- classifier -----------------------------------------------------------

class EmptyTrainingSet : public Error {
 public:
  EmptyTrainingSet() : Error("training set needs at least 2 samples") {}
};

class SingleClassData : public Error {
 public:
  SingleClassData() : Error("training set contains a single class") {}
};

class IoError : public Error {
 public:
  using Error::Error;
};

class BadVersion : public Error {
 public:
  explicit BadVersion(const std::string& found)
      : Error("unsupported model version: '" + found + "'") {}
};

class FeatureOrderMismatch : public Error {
 public:
  FeatureOrderMismatch()
      : Error("model feature_names do not match the canonical order") {}
};

class MalformedModel : public Error {
 public:
  explicit MalformedModel(const std::string& detail)
      : Error("malformed model: " + detail) {}
};

// --- gerrit ---------------------------------------------------------------

class GerritError : public Error {
 public:
  using Error::Error;
};

class HttpError : public GerritError {
 public:
  HttpError(int status, const std::string& detail)
      : GerritError("gerrit returned HTTP " + std::to_string(status) +
                    (detail.empty() ? "" : ": " + detail)),
        status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

class AuthRequired : public GerritError {
 public:
  explicit AuthRequired(int status)
      : GerritError("gerrit rejected credentials (HTTP " +
                    std::to_string(status) + ")"),
        status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

class NotFound : public GerritError {
 public:
  explicit NotFound(const std::string& id)
      : GerritError("change not found: " + id) {}
};

class DecodeError : public GerritError {
 public:
  explicit DecodeError(const std::string& detail)
      : GerritError("cannot decode gerrit response: " + detail) {}
};

class Timeout : public GerritError {
 public:
  explicit Timeout(const std::string& detail)
      : GerritError("gerrit request timed out: " + detail) {}
};

class Unreachable : public GerritError {
 public:
  explicit Unreachable(const std::string& detail)
      : GerritError("gerrit unreachable: " + detail) {}
};

class MissingField : public GerritError {
 public:
  explicit MissingField(const std::string& name)
      : GerritError("missing field in ChangeInfo: " + name) {}
};

// --- eval -----------------------------------------------------------------

class MissingChange : public Error {
 public:
  explicit MissingChange(const std::string& key)
      : Error("link refers to unknown change_key: " + key) {}
};

class UnknownMethod : public Error {
 public:
  explicit UnknownMethod(const std::string& name)
      : Error("unknown method: " + name) {}
};

}  // namespace patchlink
