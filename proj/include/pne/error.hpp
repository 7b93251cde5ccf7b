/* Copyright 2026 The PNE Contrast Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef PNE_ERROR_HPP_
#define PNE_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pne {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition violated by the caller (bad shape, out-of-range id, NaN).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Input is well-formed but degenerate, e.g. normalizing a zero vector.
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

/// Configuration rejected. `key()` names the offending field.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error("config error at '" + key + "': " + what), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite objective.
class TrainingDivergence : public Error {
 public:
  TrainingDivergence(std::size_t iteration, const std::string& what)
      : Error("training diverged at iteration " + std::to_string(iteration) +
              ": " + what),
        iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

}  // namespace pne

#endif  // PNE_ERROR_HPP_
