/*
 * Copyright 2026 The hetfl Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef HETFL_ERROR_HPP_
#define HETFL_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace hetfl {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent tensor / vector shapes between arguments.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A well-formed call whose arguments violate an operation's precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Malformed or unreadable external input (IDX files, config files, CSV).
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Raised when some parameter region is trained by no participant in a round
// and the run is configured to treat that as fatal.
class CoverageViolation : public Error {
 public:
  CoverageViolation(int round, std::size_t uncovered)
      : Error("round " + std::to_string(round) + ": " +
              std::to_string(uncovered) +
              " parameters are covered by no participant"),
        round_(round),
        uncovered_(uncovered) {}

  int round() const { return round_; }
  std::size_t uncovered() const { return uncovered_; }

 private:
  int round_;
  std::size_t uncovered_;
};

}  // namespace hetfl

#endif  // HETFL_ERROR_HPP_
