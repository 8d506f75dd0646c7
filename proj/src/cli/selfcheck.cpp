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

// Randomized consistency checks run by `hetfl selfcheck`. Each check
// compares the library against a brute-force restatement of its contract.

#include <cmath>
#include <cstring>
#include <random>
#include <set>
#include <sstream>

#include "hetfl/cli.hpp"
#include "hetfl/pruning.hpp"

namespace hetfl::cli {

namespace {

constexpr double kFdStep = 1e-6;
constexpr double kFdTolerance = 1e-5;
// Relative errors are taken against max(|analytic|, |numeric|, floor) so
// that vanishing gradient entries are compared in absolute terms.
constexpr double kFdFloor = 1e-3;

nn::LayerLayout random_layout(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> depth(2, 4);
  std::uniform_int_distribution<std::size_t> width(1, 5);
  for (;;) {
    std::vector<std::size_t> sizes(depth(rng));
    for (auto& s : sizes) s = width(rng);
    sizes.back() = std::max<std::size_t>(sizes.back(), 2);
    nn::LayerLayout layout(sizes);
    if (layout.total() <= 100) return layout;
  }
}

nn::Batch random_batch(const nn::LayerLayout& layout, std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> x(0.0, 1.0);
  std::uniform_int_distribution<int> y(0, static_cast<int>(layout.num_classes()) - 1);
  nn::Batch b;
  b.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(layout.input_dim()));
  for (Eigen::Index i = 0; i < b.inputs.size(); ++i) b.inputs.data()[i] = x(rng);
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(y(rng));
  return b;
}

Mask random_mask(std::size_t n, double p_one, std::mt19937_64& rng) {
  std::bernoulli_distribution bit(p_one);
  std::vector<std::uint8_t> bits(n);
  for (auto& b : bits) b = bit(rng) ? 1 : 0;
  return Mask(std::move(bits));
}

CheckResult check_gradient(const SelfCheckOptions& opt) {
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> w(0.0, 0.5);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto layout = random_layout(rng);
    nn::ParamVector p(layout);
    for (auto& v : p.values) v = w(rng);
    const auto batch = random_batch(layout, 5, rng);
    auto analytic = nn::loss_and_grad(p, batch).grad;
    if (opt.corrupt_gradient) {
      for (auto& g : analytic) g = g * 1.01 + 1e-3;
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      auto plus = p;
      auto minus = p;
      plus.values[i] += kFdStep;
      minus.values[i] -= kFdStep;
      const double numeric = (nn::loss_and_grad(plus, batch).loss -
                              nn::loss_and_grad(minus, batch).loss) /
                             (2 * kFdStep);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), kFdFloor});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  std::ostringstream detail;
  detail << "max relative error " << worst << " over 100 nets";
  return {"gradient_finite_difference", worst < kFdTolerance, detail.str()};
}

CheckResult check_regions(const SelfCheckOptions& opt) {
  std::mt19937_64 rng(opt.seed + 1);
  std::uniform_int_distribution<std::size_t> params(1, 64);
  std::uniform_int_distribution<std::size_t> slots(1, 6);
  std::uniform_real_distribution<double> density(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = params(rng);
    std::vector<Mask> masks;
    const auto k = slots(rng);
    for (std::size_t s = 0; s < k; ++s) masks.push_back(random_mask(n, density(rng), rng));
    const auto part = federation::decompose_regions(masks);

    std::vector<int> owner(n, -1);
    std::set<std::vector<std::size_t>> signatures;
    for (std::size_t r = 0; r < part.regions.size(); ++r) {
      const auto& region = part.regions[r];
      if (!signatures.insert(region.slots).second) {
        return {"region_partition", false, "duplicate signature"};
      }
      for (auto i : region.indices) {
        if (i >= n || owner[i] != -1) return {"region_partition", false, "overlap"};
        owner[i] = static_cast<int>(r);
        std::vector<std::size_t> sig;
        for (std::size_t s = 0; s < k; ++s) {
          if (masks[s][i]) sig.push_back(s);
        }
        if (sig != region.slots) return {"region_partition", false, "wrong signature"};
      }
    }
    for (int o : owner) {
      if (o == -1) return {"region_partition", false, "index left out"};
    }
  }
  return {"region_partition", true, "1000 random instances"};
}

CheckResult check_aggregation(const SelfCheckOptions& opt) {
  std::mt19937_64 rng(opt.seed + 2);
  std::uniform_int_distribution<std::size_t> width(1, 6);
  std::uniform_int_distribution<std::size_t> slots(1, 6);
  std::normal_distribution<double> v(0.0, 1.0);
  std::uniform_real_distribution<double> density(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    nn::LayerLayout layout({width(rng), width(rng)});
    if (layout.total() > 64) continue;
    const auto k = slots(rng);
    nn::ParamVector prev(layout);
    for (auto& x : prev.values) x = v(rng);
    std::vector<Mask> masks;
    std::vector<nn::ParamVector> locals;
    for (std::size_t s = 0; s < k; ++s) {
      masks.push_back(random_mask(layout.total(), density(rng), rng));
      nn::ParamVector local(layout);
      for (std::size_t i = 0; i < local.size(); ++i) local.values[i] = masks[s][i] ? v(rng) : 0.0;
      locals.push_back(std::move(local));
    }
    const auto got =
        federation::aggregate(locals, masks, federation::decompose_regions(masks), prev);
    for (std::size_t i = 0; i < prev.size(); ++i) {
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t s = 0; s < k; ++s) {
        if (masks[s][i]) {
          sum += locals[s].values[i];
          ++count;
        }
      }
      const double want = count ? sum / static_cast<double>(count) : prev.values[i];
      if (std::memcmp(&want, &got.values[i], sizeof want) != 0) {
        return {"aggregation", false, "index mismatch"};
      }
    }
  }
  return {"aggregation", true, "1000 random instances"};
}

CheckResult check_mask_closure(const SelfCheckOptions& opt) {
  std::mt19937_64 rng(opt.seed + 3);
  std::normal_distribution<double> w(0.0, 0.5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto layout = random_layout(rng);
    const auto mask = random_mask(layout.total(), 0.6, rng);
    nn::ParamVector p(layout);
    for (auto& x : p.values) x = w(rng);
    p = pruning::apply_mask(p, mask);
    nn::OptimizerState state(p.size(), 0.1, 0.5);
    for (int step = 0; step < 20; ++step) {
      const auto g = nn::loss_and_grad(p, random_batch(layout, 4, rng)).grad;
      nn::masked_sgd_step(p, g, mask, state);
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double zero = 0.0;
        if (!mask[i] && (std::memcmp(&p.values[i], &zero, sizeof zero) != 0 ||
                         std::memcmp(&state.momentum_buffer[i], &zero, sizeof zero) != 0)) {
          return {"mask_closure", false, "masked coordinate changed"};
        }
      }
    }
  }
  return {"mask_closure", true, "50 nets x 20 momentum steps"};
}

}  // namespace

std::vector<CheckResult> selfcheck(const SelfCheckOptions& options) {
  return {check_gradient(options), check_aggregation(options), check_regions(options),
          check_mask_closure(options)};
}

}  // namespace hetfl::cli
