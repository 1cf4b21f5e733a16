/* Copyright (c) 2026 The stylediff Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#pragma once

#include <stdexcept>
#include <string>

namespace stylediff {

/// Caller passed something the operation cannot accept (bad size, unknown
/// layer, mismatched shapes). The CLI maps this to exit code 2.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A config or experiment spec failed validation. `field()` names the
/// offending key path, e.g. "input.style1.font".
class ValidationError : public ArgumentError {
 public:
  ValidationError(std::string field, const std::string& what)
      : ArgumentError(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GlyphNotFound : public std::runtime_error {
 public:
  explicit GlyphNotFound(const std::string& what)
      : std::runtime_error("glyph not found: " + what) {}
};

/// Non-finite value encountered. `iteration()` is -1 outside optimization.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what, long iteration = -1)
      : std::runtime_error(iteration >= 0
                               ? what + " (iteration " + std::to_string(iteration) + ")"
                               : what),
        iteration_(iteration) {}
  long iteration() const noexcept { return iteration_; }

 private:
  long iteration_;
};

}  // namespace stylediff
