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

#include "hetfl/federation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <numeric>
#include <thread>

#include "hetfl/error.hpp"

namespace hetfl::federation {

std::size_t FederationConfig::participants() const {
  if (!(participation_ratio > 0.0)) return 0;
  // The epsilon absorbs representation error, e.g. 0.29 * 100.
  return static_cast<std::size_t>(
      std::floor(participation_ratio * static_cast<double>(num_clients) + 1e-9));
}

void FederationConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (num_clients == 0) fail("num_clients must be positive");
  if (!(participation_ratio > 0.0 && participation_ratio <= 1.0)) {
    fail("participation_ratio must lie in (0, 1]");
  }
  const auto m = participants();
  if (m == 0) fail("participation_ratio * num_clients selects no client");
  if (codename.size() != m) {
    fail("codename '" + codename + "' has " + std::to_string(codename.size()) +
         " digits but each round samples " + std::to_string(m) + " clients");
  }
  try {
    (void)policies();
  } catch (const InvalidArgument& e) {
    fail(e.what());
  }
  if (rounds < 0) fail("rounds must be non-negative");
  if (local_epochs < 1) fail("local_epochs must be >= 1");
  if (local_batch == 0) fail("local_batch must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    fail("learning_rate must be a finite non-negative number");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (freeze_after_round && *freeze_after_round < 1) fail("freeze_after_round must be >= 1");
  if (classes_per_client == 0) fail("classes_per_client must be positive");
  if (binding == SlotBinding::kStatic && num_clients != m) {
    fail("static slot binding needs num_clients equal to the codename length");
  }
  for (auto h : hidden_layers) {
    if (h == 0) fail("hidden layer sizes must be positive");
  }
  if (family != pruning::Family::kWeight && hidden_layers.empty()) {
    fail(std::string(pruning::to_string(family)) + " pruning needs a hidden layer");
  }
  if (test_batch == 0) fail("test_batch must be positive");
  if (threads == 0) fail("threads must be positive");
}

nn::LayerLayout FederationConfig::layout(std::size_t input_dim,
                                         std::size_t num_classes) const {
  std::vector<std::size_t> sizes{input_dim};
  sizes.insert(sizes.end(), hidden_layers.begin(), hidden_layers.end());
  sizes.push_back(num_classes);
  return nn::LayerLayout(std::move(sizes));
}

pruning::PolicyAssignment FederationConfig::policies() const {
  return pruning::parse_codename(codename, family, freeze_after_round);
}

double theory_learning_rate(int local_epochs, int rounds, double smoothness) {
  if (local_epochs < 1 || rounds < 1 || !(smoothness > 0.0)) {
    throw InvalidArgument("theory_learning_rate: T, Q >= 1 and L > 0 required");
  }
  const double t = local_epochs;
  return std::min(1.0 / std::sqrt(t * rounds), 1.0 / (6.0 * smoothness * t));
}

FederatedData make_federated_data(data::Dataset train, data::Dataset test,
                                  const FederationConfig& config) {
  train.validate();
  test.validate();
  if (train.num_features != test.num_features) {
    throw ConfigError("train and test splits have different feature counts");
  }
  const auto classes = std::max(train.num_classes, test.num_classes);
  train.num_classes = test.num_classes = classes;
  data::PartitionSpec spec{config.partition, config.num_clients,
                           config.classes_per_client, config.seed};
  FederatedData out;
  out.train_shards = data::partition(train, spec);
  out.test_shards = data::partition(test, spec);
  out.train = std::move(train);
  out.test = std::move(test);
  return out;
}

std::uint64_t slot_stream_seed(std::uint64_t seed, int round, std::size_t slot) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(round), static_cast<std::uint32_t>(slot),
                    0x51u};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (std::uint64_t{words[0]} << 32) | words[1];
}

GlobalState init_state(const FederationConfig& config, const nn::LayerLayout& layout) {
  std::seed_seq seq{static_cast<std::uint32_t>(config.seed),
                    static_cast<std::uint32_t>(config.seed >> 32), 0x5a4du};
  GlobalState state{0, nn::init_params(layout, config.seed),
                    std::vector<std::optional<Mask>>(config.participants()),
                    std::mt19937_64(seq)};
  return state;
}

std::vector<std::size_t> sample_participants(GlobalState& state,
                                             const FederationConfig& config) {
  const auto m = config.participants();
  if (m == 0 || m > config.num_clients) {
    throw ConfigError("cannot sample " + std::to_string(m) + " of " +
                      std::to_string(config.num_clients) + " clients");
  }
  std::vector<std::size_t> ids(config.num_clients);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  if (config.binding == SlotBinding::kStatic) {
    ids.resize(m);
    return ids;
  }
  std::shuffle(ids.begin(), ids.end(), state.rng);
  ids.resize(m);
  return ids;
}

RegionPartition decompose_regions(std::span<const Mask> masks) {
  RegionPartition out;
  out.num_slots = masks.size();
  if (masks.empty()) return out;
  out.num_params = masks.front().size();
  for (const auto& m : masks) {
    if (m.size() != out.num_params) throw ShapeError("decompose_regions: mask lengths differ");
  }

  const std::size_t words = (masks.size() + 63) / 64;
  std::vector<const std::uint8_t*> rows;
  for (const auto& m : masks) rows.push_back(m.bits().data());
  std::map<std::vector<std::uint64_t>, std::size_t> region_of;
  std::vector<std::uint64_t> key(words);
  std::vector<std::vector<std::size_t>> members;
  // Neighbouring indices usually share a signature; skip the lookup then.
  std::vector<std::uint64_t> last_key;
  std::size_t last_id = 0;
  std::uint64_t last_word = 0;
  for (std::size_t i = 0; i < out.num_params; ++i) {
    if (words == 1) {
      std::uint64_t w = 0;
      for (std::size_t s = 0; s < rows.size(); ++s) w |= std::uint64_t{rows[s][i]} << s;
      if (i > 0 && w == last_word) {
        members[last_id].push_back(i);
        continue;
      }
      last_word = w;
      key[0] = w;
    } else {
      std::fill(key.begin(), key.end(), 0);
      for (std::size_t s = 0; s < rows.size(); ++s) {
        key[s / 64] |= std::uint64_t{rows[s][i]} << (s % 64);
      }
    }
    if (key != last_key) {
      auto it = region_of.find(key);
      if (it == region_of.end()) {
        it = region_of.emplace(key, members.size()).first;
        members.emplace_back();
      }
      last_key = key;
      last_id = it->second;
    }
    members[last_id].push_back(i);
  }

  // Regions are listed in signature order.
  for (const auto& [sig, id] : region_of) {
    Region r;
    for (std::size_t s = 0; s < masks.size(); ++s) {
      if ((sig[s / 64] >> (s % 64)) & 1U) r.slots.push_back(s);
    }
    r.indices = std::move(members[id]);
    out.regions.push_back(std::move(r));
  }
  return out;
}

CoverageReport coverage_index(const RegionPartition& partition) {
  CoverageReport rep;
  bool first = true;
  for (const auto& r : partition.regions) {
    rep.per_region_count.push_back(r.slots.size());
    if (r.slots.empty()) rep.uncovered_params += r.indices.size();
    if (first || r.slots.size() < rep.gamma_min) rep.gamma_min = r.slots.size();
    first = false;
  }
  return rep;
}

nn::ParamVector local_update(const nn::ParamVector& global, const Mask& mask,
                             const data::Dataset& train,
                             std::span<const std::size_t> shard,
                             const LocalOptions& options, std::uint64_t stream_seed) {
  if (shard.empty()) throw InvalidArgument("local_update: empty shard");
  if (options.batch == 0) throw InvalidArgument("local_update: batch must be positive");
  nn::ParamVector theta = pruning::apply_mask(global, mask);
  nn::OptimizerState opt(theta.size(), options.learning_rate, options.momentum);
  std::mt19937_64 rng(stream_seed);
  std::vector<std::size_t> order(shard.begin(), shard.end());
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += options.batch) {
      const auto len = std::min(options.batch, order.size() - start);
      const auto batch =
          nn::make_batch(train, std::span(order).subspan(start, len));
      const auto lg = nn::loss_and_grad(theta, batch);
      nn::masked_sgd_step(theta, lg.grad, mask, opt);
    }
  }
  return theta;
}

nn::ParamVector aggregate(std::span<const nn::ParamVector> locals,
                          std::span<const Mask> masks,
                          const RegionPartition& partition,
                          const nn::ParamVector& previous) {
  const std::size_t n = previous.size();
  if (locals.size() != masks.size() || partition.num_slots != masks.size()) {
    throw InvalidArgument("aggregate: locals, masks and partition disagree on slot count");
  }
  if (partition.num_params != n && !masks.empty()) {
    throw InvalidArgument("aggregate: partition does not match the parameter count");
  }
  for (std::size_t s = 0; s < locals.size(); ++s) {
    if (locals[s].size() != n || masks[s].size() != n) {
      throw ShapeError("aggregate: slot " + std::to_string(s) + " has the wrong length");
    }
  }

  nn::ParamVector out = previous;
  std::vector<std::uint8_t> seen(n, 0);
  for (const auto& region : partition.regions) {
    for (auto i : region.indices) {
      if (i >= n || seen[i]++) {
        throw InvalidArgument("aggregate: partition regions overlap or overflow");
      }
      std::size_t covering = 0;
      for (std::size_t s = 0; s < masks.size(); ++s) covering += masks[s][i] ? 1 : 0;
      if (covering != region.slots.size()) {
        throw InvalidArgument("aggregate: partition is inconsistent with the masks");
      }
      for (auto s : region.slots) {
        if (s >= masks.size() || !masks[s][i]) {
          throw InvalidArgument("aggregate: partition is inconsistent with the masks");
        }
      }
      if (region.slots.empty()) continue;
      double sum = 0.0;
      for (auto s : region.slots) sum += locals[s].values[i];
      out.values[i] = sum / static_cast<double>(region.slots.size());
    }
  }
  if (!masks.empty() && std::count(seen.begin(), seen.end(), 1) != static_cast<std::ptrdiff_t>(n)) {
    throw InvalidArgument("aggregate: partition does not cover every parameter");
  }
  return out;
}

namespace {

pruning::MaskableSet maskable_for(const FederationConfig& config,
                                  const nn::LayerLayout& layout) {
  if (config.family != pruning::Family::kWeight) {
    return pruning::first_hidden_neurons(layout);
  }
  return config.maskable == MaskableChoice::kAllWeights ? pruning::all_weights(layout)
                                                        : pruning::first_layer_weights(layout);
}

template <typename Fn>
void for_each_slot(std::size_t slots, std::size_t threads, Fn&& fn) {
  if (threads <= 1 || slots <= 1) {
    for (std::size_t s = 0; s < slots; ++s) fn(s);
    return;
  }
  std::vector<std::exception_ptr> errors(slots);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(threads, slots); ++t) {
    pool.emplace_back([&] {
      for (std::size_t s = next++; s < slots; s = next++) {
        try {
          fn(s);
        } catch (...) {
          errors[s] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

RoundOutcome run_round(GlobalState& state, const FederationConfig& config,
                       const FederatedData& data, const WarningSink& warn) {
  const int q = state.round + 1;
  const auto& theta = state.params;
  const auto& layout = theta.layout;
  const auto policies = config.policies();
  const std::size_t slots = policies.per_slot.size();
  if (state.frozen.size() != slots) state.frozen.resize(slots);

  RoundOutcome out;
  out.participants = sample_participants(state, config);

  const bool all_frozen =
      config.freeze_after_round && q > *config.freeze_after_round &&
      std::all_of(state.frozen.begin(), state.frozen.end(),
                  [](const auto& m) { return m.has_value(); });
  pruning::Segments segments;
  if (!all_frozen) {
    segments = pruning::quartile_segments(
        pruning::rank_maskable(theta, maskable_for(config, layout), config.family));
  }
  out.masks.reserve(slots);
  for (std::size_t k = 0; k < slots; ++k) {
    const Mask* frozen = state.frozen[k] ? &*state.frozen[k] : nullptr;
    out.masks.push_back(
        pruning::generate_mask(policies.per_slot[k], segments, theta.size(), q, frozen));
    if (config.freeze_after_round && q == *config.freeze_after_round) {
      state.frozen[k] = out.masks.back();
    }
  }

  const LocalOptions local{config.local_epochs, config.local_batch, config.learning_rate,
                           config.momentum};
  std::vector<nn::ParamVector> locals(slots, nn::ParamVector(layout));
  for_each_slot(slots, config.threads, [&](std::size_t k) {
    const auto client = out.participants[k];
    locals[k] = local_update(theta, out.masks[k], data.train, data.train_shards.at(client),
                             local, slot_stream_seed(config.seed, q, k));
  });

  const auto partition = decompose_regions(out.masks);
  const auto coverage = coverage_index(partition);
  if (coverage.gamma_min == 0) {
    if (config.uncovered_region_action == UncoveredAction::kError) {
      throw CoverageViolation(q, coverage.uncovered_params);
    }
    if (warn) {
      warn("round " + std::to_string(q) + ": " + std::to_string(coverage.uncovered_params) +
           " parameters covered by no participant keep their previous values");
    }
  }

  nn::ParamVector next = aggregate(locals, out.masks, partition, theta);
  if (!next.all_finite()) {
    throw Error("round " + std::to_string(q) + ": global model became non-finite");
  }

  auto& m = out.metrics;
  m.round = q;
  m.gamma_min = coverage.gamma_min;
  m.uncovered_params = coverage.uncovered_params;
  std::vector<metrics::ModelAccount> accounts;
  for (const auto& mask : out.masks) {
    m.delta_sq.push_back(pruning::pruning_noise(theta, mask).delta_sq);
    m.mask_density.push_back(mask.density());
    accounts.push_back(metrics::account(layout, mask));
  }
  const auto full = metrics::account(layout, Mask::ones(layout.total()));
  const auto amort = metrics::amortized(accounts, full);
  m.amortized_params = amort.params;
  m.amortized_flops = amort.flops;

  const auto ones = Mask::ones(next.size());
  const auto global_eval = nn::evaluate(next, ones, data.test, config.test_batch);
  m.global_loss = global_eval.loss;
  m.global_accuracy = global_eval.accuracy;

  std::vector<metrics::ClientModel> clients;
  for (std::size_t k = 0; k < slots; ++k) {
    clients.push_back({1.0 / static_cast<double>(slots), &locals[k], &out.masks[k],
                       data.test_shards.at(out.participants[k])});
  }
  m.local_weighted_accuracy = metrics::weighted_accuracy(clients, data.test, config.test_batch);
  m.grad_norm_sq = metrics::grad_norm_estimate(next, data.test);

  state.params = std::move(next);
  state.round = q;
  return out;
}

RunResult run(const FederationConfig& config, const FederatedData& data,
              const RoundSink& sink, const WarningSink& warn) {
  config.validate();
  const auto layout = config.layout(data.train.num_features, data.train.num_classes);
  GlobalState state = init_state(config, layout);
  RunResult result{{}, state.params, state.params};
  for (int q = 1; q <= config.rounds; ++q) {
    auto outcome = run_round(state, config, data, warn);
    if (sink) sink(outcome.metrics);
    result.metrics.push_back(std::move(outcome.metrics));
  }
  result.final_params = state.params;
  return result;
}

}  // namespace hetfl::federation
