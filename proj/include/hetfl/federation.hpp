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

// Round engine for federated training with heterogeneous pruned models.
//
// Each round the server samples participants, derives one mask per
// participation slot from the current global model, every slot trains its
// pruned copy with masked SGD, and the global model is rebuilt region by
// region: a region is the set of parameter indices kept by exactly the same
// slots, and its new value is the mean over those slots.

#ifndef HETFL_FEDERATION_HPP_
#define HETFL_FEDERATION_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hetfl/data.hpp"
#include "hetfl/mask.hpp"
#include "hetfl/metrics.hpp"
#include "hetfl/nn.hpp"
#include "hetfl/pruning.hpp"

namespace hetfl::federation {

enum class UncoveredAction { kError, kWarn };
// kPerRound: codename digit k governs the k-th client sampled each round.
// kStatic: digit k governs client k (requires N == codename length).
enum class SlotBinding { kPerRound, kStatic };
enum class MaskableChoice { kFirstLayer, kAllWeights };

struct FederationConfig {
  std::size_t num_clients = 100;
  double participation_ratio = 0.1;
  int rounds = 100;
  int local_epochs = 5;
  std::size_t local_batch = 10;
  double learning_rate = 0.01;
  double momentum = 0.5;
  std::string codename = "1111111111";
  pruning::Family family = pruning::Family::kWeight;
  std::optional<int> freeze_after_round;
  std::uint64_t seed = 0;
  data::PartitionMode partition = data::PartitionMode::kIid;
  std::size_t classes_per_client = 2;
  UncoveredAction uncovered_region_action = UncoveredAction::kWarn;
  SlotBinding binding = SlotBinding::kPerRound;
  MaskableChoice maskable = MaskableChoice::kFirstLayer;
  std::vector<std::size_t> hidden_layers{200};
  std::size_t test_batch = nn::kDefaultTestBatch;
  // Local updates of distinct slots run on up to this many threads.
  std::size_t threads = 1;

  std::size_t participants() const;
  // Throws ConfigError.
  void validate() const;
  nn::LayerLayout layout(std::size_t input_dim, std::size_t num_classes) const;
  pruning::PolicyAssignment policies() const;
};

// Learning rate 1/sqrt(T Q) capped at 1/(6 L T).
double theory_learning_rate(int local_epochs, int rounds, double smoothness);

struct FederatedData {
  data::Dataset train;
  data::Dataset test;
  data::Shards train_shards;
  data::Shards test_shards;
};

// Partitions train and test with the same spec, so under label skew a
// client's test portion carries the labels of its training shard.
FederatedData make_federated_data(data::Dataset train, data::Dataset test,
                                  const FederationConfig& config);

struct GlobalState {
  int round = 0;  // completed rounds
  nn::ParamVector params;
  std::vector<std::optional<Mask>> frozen;  // per slot, PT only
  std::mt19937_64 rng;
};

GlobalState init_state(const FederationConfig& config, const nn::LayerLayout& layout);

std::vector<std::size_t> sample_participants(GlobalState& state,
                                             const FederationConfig& config);

struct Region {
  std::vector<std::size_t> slots;  // ascending
  std::vector<std::size_t> indices;
};

struct RegionPartition {
  std::size_t num_slots = 0;
  std::size_t num_params = 0;
  std::vector<Region> regions;
};

RegionPartition decompose_regions(std::span<const Mask> masks);

struct CoverageReport {
  std::vector<std::size_t> per_region_count;
  std::size_t gamma_min = 0;
  std::size_t uncovered_params = 0;
};

CoverageReport coverage_index(const RegionPartition& partition);

struct LocalOptions {
  int epochs = 5;
  std::size_t batch = 10;
  double learning_rate = 0.01;
  double momentum = 0.5;
};

// Trains apply_mask(global, mask) for `epochs` passes over `shard`,
// reshuffled each epoch from `stream_seed`.
nn::ParamVector local_update(const nn::ParamVector& global, const Mask& mask,
                             const data::Dataset& train,
                             std::span<const std::size_t> shard,
                             const LocalOptions& options,
                             std::uint64_t stream_seed);

// Region-wise mean of the local models; regions nobody covers keep
// `previous`. Sums run in ascending slot order.
nn::ParamVector aggregate(std::span<const nn::ParamVector> locals,
                          std::span<const Mask> masks,
                          const RegionPartition& partition,
                          const nn::ParamVector& previous);

// Seed of the RNG stream used by `slot` in `round`.
std::uint64_t slot_stream_seed(std::uint64_t seed, int round, std::size_t slot);

struct RoundOutcome {
  metrics::RoundMetrics metrics;
  std::vector<std::size_t> participants;
  std::vector<Mask> masks;
};

using WarningSink = std::function<void(std::string_view)>;

RoundOutcome run_round(GlobalState& state, const FederationConfig& config,
                       const FederatedData& data, const WarningSink& warn = {});

struct RunResult {
  std::vector<metrics::RoundMetrics> metrics;
  nn::ParamVector final_params;
  nn::ParamVector initial_params;
};

using RoundSink = std::function<void(const metrics::RoundMetrics&)>;

RunResult run(const FederationConfig& config, const FederatedData& data,
              const RoundSink& sink = {}, const WarningSink& warn = {});

}  // namespace hetfl::federation

#endif  // HETFL_FEDERATION_HPP_
