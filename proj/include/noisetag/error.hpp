// Copyright 2026 The Noisetag Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace noisetag {

// Base type for every error the library throws. The CLI catches this at the
// top level; everything below throws the most specific subtype.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A precondition on an operation's inputs was violated.
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

// Tensor/matrix shapes do not line up; the message lists both shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A file (manifest, vocabulary, plan, config) failed to parse.
class ParseError : public Error {
 public:
  using Error::Error;
};

// A model or training configuration violates its invariants.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An API was called out of sequence (e.g. backward before forward).
class UsageError : public Error {
 public:
  using Error::Error;
};

// A figure of merit is undefined for the given labels.
class MetricError : public Error {
 public:
  using Error::Error;
};

// File I/O failure.
class IoError : public Error {
 public:
  using Error::Error;
};

// A training run hit a non-recoverable numeric problem and was aborted.
class TrainAbortError : public Error {
 public:
  using Error::Error;
};

}  // namespace noisetag
