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

// Mask generation for per-weight (WP), per-neuron (NP) and fixed
// sub-network (FS) pruning, quartile-subset policies addressed by codename
// digits, and the pruning-noise ratio of a mask.
//
// A ranking orders "units" from most to least important. A WP unit is one
// maskable weight; an NP/FS unit is one neuron of the first hidden layer,
// i.e. its incoming weights, its bias and its outgoing weights. The ranked
// units are cut into four segments S1..S4 (S1 most important) and a policy
// keeps a subset of them.

#ifndef HETFL_PRUNING_HPP_
#define HETFL_PRUNING_HPP_

#include <array>
#include <bitset>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hetfl/mask.hpp"
#include "hetfl/nn.hpp"

namespace hetfl::pruning {

enum class Family { kWeight, kNeuron, kFixed };

std::string_view to_string(Family family);
// Accepts "WP", "NP", "FS" (case-insensitive).
Family parse_family(std::string_view name);

// Bit s set <=> segment S(s+1) is kept.
using SegmentSet = std::bitset<4>;

struct PruningPolicy {
  Family family = Family::kWeight;
  SegmentSet kept{0b1111};
  // Masks generated after this round are replaced by the one generated in it.
  std::optional<int> freeze_after_round;

  void validate() const;
  // Segments actually kept. FS keeps a contiguous prefix S1..Sk with k equal
  // to the number of kept segments; the other families keep `kept` as is.
  SegmentSet effective_segments() const;
};

struct PolicyAssignment {
  std::string codename;
  std::vector<PruningPolicy> per_slot;
};

// Digit -> kept segments: 1 {S1..S4}, 2 {S1,S3,S4}, 3 {S1,S2,S4},
// 4 {S1,S2,S3}, 5 {S1,S2}, 6 {S1,S3}, 7 {S1,S4}.
SegmentSet segments_for_digit(char digit);

PolicyAssignment parse_codename(std::string_view codename,
                                Family family = Family::kWeight,
                                std::optional<int> freeze_after_round = std::nullopt);

struct MaskableSet {
  std::vector<std::size_t> indices;

  void validate(std::size_t num_params) const;
};

// First-layer weight matrix: the WP default.
MaskableSet first_layer_weights(const nn::LayerLayout& layout);
// Every weight entry of every layer.
MaskableSet all_weights(const nn::LayerLayout& layout);
// Union of the parameters of every first-hidden-layer neuron.
MaskableSet first_hidden_neurons(const nn::LayerLayout& layout);

// Units in rank order, stored compactly: unit k owns
// indices[offsets[k] .. offsets[k + 1]).
struct Ranking {
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> indices;

  std::size_t num_units() const { return offsets.size() - 1; }
  std::span<const std::size_t> unit(std::size_t k) const {
    return std::span(indices).subspan(offsets[k], offsets[k + 1] - offsets[k]);
  }
  // Ranked order of the underlying parameter indices.
  const std::vector<std::size_t>& flattened() const { return indices; }
};

// Parameter indices making up first-hidden-layer neuron `j`: incoming
// weights, bias, outgoing weights.
std::vector<std::size_t> neuron_indices(const nn::LayerLayout& layout, std::size_t j);

// WP: maskable indices by |theta| descending. NP: first-hidden-layer
// neurons by L1 norm of incoming weights descending. FS: neurons in natural
// order. Ties go to the lower index. `maskable` is only consulted for WP.
Ranking rank_maskable(const nn::ParamVector& params, const MaskableSet& maskable,
                      Family family);

using Segments = std::array<std::vector<std::size_t>, 4>;

// Cuts the ranked units into four groups whose unit counts differ by at most
// one (earlier groups take the remainder) and expands them to indices.
Segments quartile_segments(const Ranking& ranking);

Mask mask_from_segments(const Segments& segments, SegmentSet keep,
                        std::size_t num_params);

// Adaptive mask for `policy` at `round` (1-based), or `frozen` unchanged once
// the policy's freeze round has passed.
Mask generate_mask(const PruningPolicy& policy, const Segments& segments,
                   std::size_t num_params, int round,
                   const Mask* frozen = nullptr);
Mask generate_mask(const PruningPolicy& policy, const nn::ParamVector& params,
                   const MaskableSet& maskable, int round,
                   const Mask* frozen = nullptr);

// Element-wise product; masked-out coordinates become +0.0.
nn::ParamVector apply_mask(const nn::ParamVector& params, const Mask& mask);

struct PruningNoise {
  double delta_sq = 0.0;
  // Set when ||theta|| = 0 and the ratio was defined as 0.
  bool zero_norm = false;
};

// ||theta - theta * m||^2 / ||theta||^2.
PruningNoise pruning_noise(const nn::ParamVector& params, const Mask& mask);

}  // namespace hetfl::pruning

#endif  // HETFL_PRUNING_HPP_
