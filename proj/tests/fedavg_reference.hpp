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


// Straight-line FedAvg: full local models, plain SGD, arithmetic mean.
// Shares only participant sampling and per-slot shuffling streams with the
// engine so the two trajectories can be compared bit for bit.

#ifndef HETFL_TESTS_FEDAVG_REFERENCE_HPP_
#define HETFL_TESTS_FEDAVG_REFERENCE_HPP_

#include <algorithm>
#include <random>
#include <vector>

#include "hetfl/federation.hpp"

namespace hetfl::testing {

inline std::vector<nn::ParamVector> fedavg_reference(const federation::FederationConfig& config,
                                                     const federation::FederatedData& data) {
  const auto layout = config.layout(data.train.num_features, data.train.num_classes);
  auto state = federation::init_state(config, layout);
  std::vector<nn::ParamVector> trajectory{state.params};
  for (int q = 1; q <= config.rounds; ++q) {
    const auto clients = federation::sample_participants(state, config);
    std::vector<double> sum(layout.total(), 0.0);
    for (std::size_t k = 0; k < clients.size(); ++k) {
      auto theta = state.params.values;
      std::mt19937_64 rng(federation::slot_stream_seed(config.seed, q, k));
      std::vector<std::size_t> order = data.train_shards[clients[k]];
      for (int e = 0; e < config.local_epochs; ++e) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t b = 0; b < order.size(); b += config.local_batch) {
          const auto len = std::min(config.local_batch, order.size() - b);
          const auto batch = nn::make_batch(data.train, std::span(order).subspan(b, len));
          const auto g = nn::loss_and_grad(nn::ParamVector(layout, theta), batch).grad;
          for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= config.learning_rate * g[i];
        }
      }
      for (std::size_t i = 0; i < theta.size(); ++i) sum[i] += theta[i];
    }
    for (auto& v : sum) v /= static_cast<double>(clients.size());
    state.params = nn::ParamVector(layout, sum);
    trajectory.push_back(state.params);
  }
  return trajectory;
}

}  // namespace hetfl::testing

#endif  // HETFL_TESTS_FEDAVG_REFERENCE_HPP_
