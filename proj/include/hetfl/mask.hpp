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

#ifndef HETFL_MASK_HPP_
#define HETFL_MASK_HPP_

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hetfl/error.hpp"

namespace hetfl {

// Dense binary mask over the flat parameter vector. Immutable once built;
// the population count is cached at construction.
class Mask {
 public:
  Mask() = default;

  static Mask ones(std::size_t n) { return Mask(std::vector<std::uint8_t>(n, 1)); }
  static Mask zeros(std::size_t n) { return Mask(std::vector<std::uint8_t>(n, 0)); }

  explicit Mask(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    for (auto& b : bits_) {
      if (b > 1) throw InvalidArgument("mask bits must be 0 or 1");
    }
    ones_ = static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
  }

  std::size_t size() const { return bits_.size(); }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  std::span<const std::uint8_t> bits() const { return bits_; }

  std::size_t count_ones() const { return ones_; }

  // Fraction of retained coordinates, ||m||_0 / |theta|.
  double density() const {
    return bits_.empty() ? 0.0
                         : static_cast<double>(ones_) /
                               static_cast<double>(bits_.size());
  }

  bool operator==(const Mask& other) const { return bits_ == other.bits_; }

 private:
  std::vector<std::uint8_t> bits_;
  std::size_t ones_ = 0;
};

}  // namespace hetfl

#endif  // HETFL_MASK_HPP_
