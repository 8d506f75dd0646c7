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

#include "hetfl/pruning.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "hetfl/error.hpp"

namespace hetfl::pruning {

std::string_view to_string(Family family) {
  switch (family) {
    case Family::kWeight:
      return "WP";
    case Family::kNeuron:
      return "NP";
    case Family::kFixed:
      return "FS";
  }
  return "?";
}

Family parse_family(std::string_view name) {
  std::string upper(name);
  for (auto& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  if (upper == "WP") return Family::kWeight;
  if (upper == "NP") return Family::kNeuron;
  if (upper == "FS") return Family::kFixed;
  throw InvalidArgument("unknown pruning family '" + std::string(name) +
                        "' (expected WP, NP or FS)");
}

void PruningPolicy::validate() const {
  if (kept.none()) throw InvalidArgument("pruning policy keeps no segment");
  if (freeze_after_round && *freeze_after_round < 1) {
    throw InvalidArgument("freeze_after_round must be >= 1");
  }
}

SegmentSet PruningPolicy::effective_segments() const {
  if (family != Family::kFixed) return kept;
  SegmentSet prefix;
  for (std::size_t s = 0; s < kept.count(); ++s) prefix.set(s);
  return prefix;
}

SegmentSet segments_for_digit(char digit) {
  switch (digit) {
    case '1':
      return SegmentSet{0b1111};
    case '2':
      return SegmentSet{0b1101};
    case '3':
      return SegmentSet{0b1011};
    case '4':
      return SegmentSet{0b0111};
    case '5':
      return SegmentSet{0b0011};
    case '6':
      return SegmentSet{0b0101};
    case '7':
      return SegmentSet{0b1001};
    default:
      throw InvalidArgument(std::string("invalid codename digit '") + digit +
                            "' (expected 1-7)");
  }
}

PolicyAssignment parse_codename(std::string_view codename, Family family,
                                std::optional<int> freeze_after_round) {
  if (codename.empty()) throw InvalidArgument("empty codename");
  PolicyAssignment out;
  out.codename = std::string(codename);
  out.per_slot.reserve(codename.size());
  for (char d : codename) {
    PruningPolicy p{family, segments_for_digit(d), freeze_after_round};
    p.validate();
    out.per_slot.push_back(p);
  }
  return out;
}

void MaskableSet::validate(std::size_t num_params) const {
  std::vector<std::uint8_t> seen(num_params, 0);
  for (auto i : indices) {
    if (i >= num_params) throw InvalidArgument("maskable index out of range");
    if (seen[i]++) throw InvalidArgument("duplicate maskable index");
  }
}

MaskableSet first_layer_weights(const nn::LayerLayout& layout) {
  const auto& s = layout.layer(0);
  MaskableSet m;
  m.indices.resize(s.weight_len);
  std::iota(m.indices.begin(), m.indices.end(), s.weight_start);
  return m;
}

MaskableSet all_weights(const nn::LayerLayout& layout) {
  MaskableSet m;
  for (const auto& s : layout.layers()) {
    for (std::size_t k = 0; k < s.weight_len; ++k) m.indices.push_back(s.weight_start + k);
  }
  return m;
}

std::vector<std::size_t> neuron_indices(const nn::LayerLayout& layout, std::size_t j) {
  if (layout.num_layers() < 2) {
    throw InvalidArgument("neuron pruning needs a hidden layer");
  }
  const auto& in = layout.layer(0);
  const auto& out = layout.layer(1);
  if (j >= in.out) throw InvalidArgument("neuron index out of range");
  std::vector<std::size_t> idx;
  idx.reserve(in.in + 1 + out.out);
  for (std::size_t k = 0; k < in.in; ++k) idx.push_back(in.weight_start + j * in.in + k);
  idx.push_back(in.bias_start + j);
  for (std::size_t r = 0; r < out.out; ++r) idx.push_back(out.weight_start + r * out.in + j);
  return idx;
}

MaskableSet first_hidden_neurons(const nn::LayerLayout& layout) {
  std::vector<std::uint8_t> member(layout.total(), 0);
  const std::size_t hidden = layout.sizes().at(1);
  for (std::size_t j = 0; j < hidden; ++j) {
    for (auto i : neuron_indices(layout, j)) member[i] = 1;
  }
  MaskableSet m;
  for (std::size_t i = 0; i < member.size(); ++i) {
    if (member[i]) m.indices.push_back(i);
  }
  return m;
}

Ranking rank_maskable(const nn::ParamVector& params, const MaskableSet& maskable,
                      Family family) {
  const auto& theta = params.values;
  Ranking r;
  if (family == Family::kWeight) {
    if (maskable.indices.empty()) throw InvalidArgument("empty maskable set");
    r.indices = maskable.indices;
    for (auto i : r.indices) {
      if (i >= theta.size()) throw InvalidArgument("maskable index out of range");
    }
    auto before = [&](std::size_t a, std::size_t b) {
      const double ma = std::abs(theta[a]);
      const double mb = std::abs(theta[b]);
      return ma != mb ? ma > mb : a < b;
    };
    if (!std::is_sorted(r.indices.begin(), r.indices.end(), before)) {
      std::sort(r.indices.begin(), r.indices.end(), before);
    }
    r.offsets.resize(r.indices.size() + 1);
    std::iota(r.offsets.begin(), r.offsets.end(), std::size_t{0});
    return r;
  }

  const auto& layout = params.layout;
  if (layout.num_layers() < 2) {
    throw InvalidArgument(std::string(to_string(family)) +
                          " ranking needs a layout with a hidden layer");
  }
  const auto& first = layout.layer(0);
  std::vector<std::size_t> order(first.out);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (family == Family::kNeuron) {
    std::vector<double> l1(first.out, 0.0);
    for (std::size_t j = 0; j < first.out; ++j) {
      const double* row = theta.data() + first.weight_start + j * first.in;
      for (std::size_t k = 0; k < first.in; ++k) l1[j] += std::abs(row[k]);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return l1[a] > l1[b]; });
  }
  for (auto j : order) {
    auto idx = neuron_indices(layout, j);
    r.indices.insert(r.indices.end(), idx.begin(), idx.end());
    r.offsets.push_back(r.indices.size());
  }
  return r;
}

Segments quartile_segments(const Ranking& ranking) {
  const std::size_t units = ranking.num_units();
  if (units < 4) {
    throw InvalidArgument("quartile segments need at least 4 ranked units, got " +
                          std::to_string(units));
  }
  Segments segs;
  const std::size_t base = units / 4;
  const std::size_t extra = units % 4;
  std::size_t u = 0;
  for (std::size_t s = 0; s < 4; ++s) {
    const std::size_t len = base + (s < extra ? 1 : 0);
    for (std::size_t k = 0; k < len; ++k, ++u) {
      auto idx = ranking.unit(u);
      segs[s].insert(segs[s].end(), idx.begin(), idx.end());
    }
  }
  return segs;
}

Mask mask_from_segments(const Segments& segments, SegmentSet keep,
                        std::size_t num_params) {
  std::vector<std::uint8_t> bits(num_params, 1);
  for (std::size_t s = 0; s < 4; ++s) {
    if (keep.test(s)) continue;
    for (auto i : segments[s]) {
      if (i >= num_params) throw InvalidArgument("segment index out of range");
      bits[i] = 0;
    }
  }
  return Mask(std::move(bits));
}

Mask generate_mask(const PruningPolicy& policy, const Segments& segments,
                   std::size_t num_params, int round, const Mask* frozen) {
  policy.validate();
  if (frozen != nullptr && policy.freeze_after_round &&
      round > *policy.freeze_after_round) {
    if (frozen->size() != num_params) throw ShapeError("frozen mask length");
    return *frozen;
  }
  return mask_from_segments(segments, policy.effective_segments(), num_params);
}

Mask generate_mask(const PruningPolicy& policy, const nn::ParamVector& params,
                   const MaskableSet& maskable, int round, const Mask* frozen) {
  policy.validate();
  if (frozen != nullptr && policy.freeze_after_round &&
      round > *policy.freeze_after_round) {
    return generate_mask(policy, Segments{}, params.size(), round, frozen);
  }
  const auto segments = quartile_segments(rank_maskable(params, maskable, policy.family));
  return generate_mask(policy, segments, params.size(), round, frozen);
}

nn::ParamVector apply_mask(const nn::ParamVector& params, const Mask& mask) {
  if (mask.size() != params.size()) {
    throw ShapeError("apply_mask: mask has " + std::to_string(mask.size()) +
                     " entries, params " + std::to_string(params.size()));
  }
  nn::ParamVector out = params;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!mask[i]) out.values[i] = 0.0;
  }
  return out;
}

PruningNoise pruning_noise(const nn::ParamVector& params, const Mask& mask) {
  if (mask.size() != params.size()) throw ShapeError("pruning_noise: mask length");
  double total = 0.0;
  double dropped = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double sq = params.values[i] * params.values[i];
    total += sq;
    if (!mask[i]) dropped += sq;
  }
  if (total == 0.0) return {0.0, true};
  return {dropped / total, false};
}

}  // namespace hetfl::pruning
