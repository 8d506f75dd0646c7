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


#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "hetfl/error.hpp"
#include "hetfl/metrics.hpp"

using namespace hetfl;
using namespace hetfl::metrics;
using pruning::Family;
using pruning::PruningPolicy;
using pruning::segments_for_digit;

namespace {

const nn::LayerLayout kMnist({784, 200, 10});

ModelAccount account_digit(Family f, char d) {
  return account(kMnist, PruningPolicy{f, segments_for_digit(d), std::nullopt});
}

TheoryConstants unit_constants() {
  TheoryConstants c;
  c.smoothness = c.grad_bound = c.num_clients = c.regions = c.gamma_star = 1.0;
  c.local_epochs = 1.0;
  c.f0 = 1.0;
  return c;
}

}  // namespace

TEST_CASE("parameter and FLOP counts") {
  CHECK(account(kMnist, Mask::ones(kMnist.total())) == ModelAccount{159010, 158800});
  CHECK(account_digit(Family::kWeight, '4') == ModelAccount{119810, 119600});
  CHECK(account_digit(Family::kWeight, '5') == ModelAccount{80610, 80400});
  // 50 pruned neurons of 784 + 1 + 10 parameters and 784 + 10 products each.
  CHECK(account_digit(Family::kNeuron, '4') == ModelAccount{159010 - 50 * 795, 158800 - 50 * 794});
  CHECK(account_digit(Family::kNeuron, '5') == ModelAccount{79510, 79400});
  CHECK(account_digit(Family::kFixed, '7') == ModelAccount{79510, 79400});
}

TEST_CASE("amortized accounting") {
  const auto full = account(kMnist, Mask::ones(kMnist.total()));
  std::vector<ModelAccount> wp(6, full), np(6, full);
  for (int i = 0; i < 4; ++i) {
    wp.push_back(account_digit(Family::kWeight, '4'));
    np.push_back(account_digit(Family::kNeuron, '4'));
  }
  const auto a = amortized(wp, full);
  CHECK(a.params == 143330);
  CHECK(a.flops == 143120);
  CHECK(a.params_ratio == doctest::Approx(0.90));
  const auto b = amortized(np, full);
  CHECK(b.params == 143110);
  CHECK(b.flops == 142920);
  // 0.8999 truncates to 0.89 rather than rounding to 0.90.
  const auto t = amortized(std::vector<ModelAccount>{{8999, 8999}}, ModelAccount{10000, 10000});
  CHECK(t.params_ratio == doctest::Approx(0.89));
  CHECK_THROWS(amortized(std::vector<ModelAccount>{}, full));
}

TEST_CASE("weighted local accuracy") {
  data::Dataset test;
  test.num_features = 2;
  test.num_classes = 2;
  test.inputs = {1, 0, 0, 1, 1, 0, 0, 1};
  test.labels = {0, 1, 0, 1};
  nn::LayerLayout layout({2, 2});
  nn::ParamVector good(layout), bad(layout);
  const auto& s = layout.layer(0);
  good.values[s.weight_start + 0] = good.values[s.weight_start + 3] = 1.0;
  bad.values[s.weight_start + 1] = bad.values[s.weight_start + 2] = 1.0;
  const auto ones = Mask::ones(layout.total());
  const std::vector<std::size_t> rows{0, 1}, rest{2, 3}, all{0, 1, 2, 3};

  CHECK(weighted_accuracy(std::vector<ClientModel>{{1.0, &good, &ones, all}}, test) == 1.0);
  const std::vector<ClientModel> two{{0.5, &good, &ones, rows}, {0.5, &bad, &ones, rest}};
  CHECK(weighted_accuracy(two, test) == doctest::Approx(0.5));
  const std::vector<ClientModel> unnormalized{{0.5, &good, &ones, rows}, {0.6, &bad, &ones, rest}};
  CHECK_THROWS(weighted_accuracy(unnormalized, test));

  // Uniform weights over equal shards of one model equal its accuracy on their union.
  auto mixed = good;
  mixed.values[s.weight_start + 3] = 0.0;
  const std::vector<ClientModel> same{{0.5, &mixed, &ones, rows}, {0.5, &mixed, &ones, rest}};
  CHECK(weighted_accuracy(same, test) ==
        doctest::Approx(nn::evaluate(mixed, ones, test, all).accuracy));
}

TEST_CASE("gradient norm estimate") {
  data::Dataset ds;
  ds.num_features = 3;
  ds.num_classes = 2;
  ds.inputs.assign(12, 0.0);
  ds.labels = {0, 1, 0, 1};
  // Zero inputs, zero weights and balanced labels: an exact stationary point.
  CHECK(grad_norm_estimate(nn::ParamVector(nn::LayerLayout({3, 2})), ds) == doctest::Approx(0.0).epsilon(1e-12));

  const auto blobs = data::synth_blobs(3, 10, 4, 0.5, 2);
  const auto p = nn::init_params(nn::LayerLayout({4, 5, 3}), 1);
  const auto g = nn::full_gradient(p, blobs).grad;
  double per_layer = 0.0;
  for (const auto& l : p.layout.layers()) {
    double w = 0.0, b = 0.0;
    for (std::size_t i = 0; i < l.weight_len; ++i) w += g[l.weight_start + i] * g[l.weight_start + i];
    for (std::size_t i = 0; i < l.bias_len; ++i) b += g[l.bias_start + i] * g[l.bias_start + i];
    per_layer += w + b;
  }
  CHECK(grad_norm_estimate(p, blobs) == doctest::Approx(per_layer).epsilon(1e-12));
}

TEST_CASE("theorem bounds on fixed constants") {
  auto c = unit_constants();
  c.rounds = 4;
  CHECK(std::abs(theorem1_rhs(c) - 2.75) < 1e-12);

  c.rounds = 1;
  c.sigma_sq = 1.0;
  CHECK(std::abs(theorem2_rhs(c) - 13.0) < 1e-12);

  TheoryConstants d;
  d.smoothness = 2;
  d.grad_bound = 3;
  d.sigma_sq = 0.5;
  d.num_clients = 4;
  d.regions = 3;
  d.local_epochs = 2;
  d.rounds = 8;
  d.gamma_star = 2;
  d.delta_sq = 0.1;
  d.avg_theta_norm_sq = 5;
  d.f0 = 1.5;
  // G0 = 6 + 6 = 12, V0 = 72, I0 = 48: 12/4 + 72/8 + 24 * 0.1 * 5.
  CHECK(std::abs(theorem1_rhs(d) - 24.0) < 1e-12);
  CHECK(std::abs(theorem1_rhs(d, BoundReading::kOverSqrtRounds) - (15.0 + 72.0 / std::sqrt(8.0))) < 1e-12);
  // H0 = 6 + 18 = 24, U0 = 144: 24/4 + 144/8 + 0.5 * 48 * 0.1 * 5.
  CHECK(std::abs(theorem2_rhs(d) - 36.0) < 1e-12);

  auto e = unit_constants();
  e.local_epochs = 4;
  e.rounds = 16;
  e.f0 = 2;
  CHECK(std::abs(theorem1_rhs(e) - 1.1875) < 1e-12);
}

TEST_CASE("theorem bound properties") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.1, 5.0);
  std::uniform_real_distribution<double> delta(0.0, 0.45);
  for (int i = 0; i < 200; ++i) {
    TheoryConstants c;
    c.smoothness = u(rng);
    c.grad_bound = u(rng);
    c.sigma_sq = u(rng);
    c.num_clients = std::ceil(u(rng) * 4);
    c.regions = std::ceil(u(rng));
    c.local_epochs = std::ceil(u(rng));
    c.rounds = std::ceil(u(rng) * 10);
    c.gamma_star = std::ceil(u(rng));
    c.delta_sq = delta(rng);
    c.avg_theta_norm_sq = u(rng);
    c.f0 = u(rng);
    auto wider = c;
    wider.gamma_star *= 2;
    CHECK(theorem1_rhs(wider) <= theorem1_rhs(c));
    CHECK(theorem1_rhs(wider, BoundReading::kOverSqrtRounds) <= theorem1_rhs(c, BoundReading::kOverSqrtRounds));
    auto noisier = c;
    noisier.delta_sq *= 2;
    CHECK(theorem1_rhs(noisier) >= theorem1_rhs(c));
    CHECK(theorem2_rhs(noisier) >= theorem2_rhs(c));
    auto still = c;
    still.delta_sq = 0;
    auto heavier = still;
    heavier.avg_theta_norm_sq *= 10;
    CHECK(theorem1_rhs(still) == theorem1_rhs(heavier));
    CHECK(theorem2_rhs(still) == theorem2_rhs(heavier));
  }
  auto bad = unit_constants();
  bad.gamma_star = 0;
  CHECK_THROWS(theorem1_rhs(bad));
  bad = unit_constants();
  bad.delta_sq = 1.0;
  CHECK_THROWS(theorem1_rhs(bad));
}

TEST_CASE("second bound matches the first when the coverage divisors are one") {
  auto c = unit_constants();
  c.num_clients = c.regions = 3;
  c.sigma_sq = 1.0;
  c.delta_sq = 0.2;
  c.avg_theta_norm_sq = 2.0;
  c.rounds = 9;
  c.local_epochs = 2;
  CHECK(theorem2_rhs(c) == doctest::Approx(theorem1_rhs(c)).epsilon(1e-14));
}

TEST_CASE("large-Q limit approaches the pruning term") {
  auto c = unit_constants();
  c.delta_sq = 0.0;
  c.rounds = 1e8;
  CHECK(theorem1_rhs(c) < 1e-3);
}

TEST_CASE("CSV and JSON-lines emission") {
  std::ostringstream empty;
  emit({}, empty);
  CHECK(empty.str() == std::string(kCsvHeader) + "\n");

  RoundMetrics m;
  m.round = 3;
  m.global_loss = 0.1 + 0.2;
  m.global_accuracy = 1.0 / 3.0;
  m.local_weighted_accuracy = 0.7000000000000002;
  m.gamma_min = 8;
  m.delta_sq = {0.0, 0.25, 1e-300};
  m.mask_density = {1.0, 0.75, 0.5};
  m.grad_norm_sq = 12345.678901234567;
  m.amortized_params = 135490;
  m.amortized_flops = 135280;
  RoundMetrics n = m;
  n.round = 4;
  n.grad_norm_sq = std::numeric_limits<double>::denorm_min();

  std::ostringstream csv, jsonl;
  emit(std::vector<RoundMetrics>{m}, csv, &jsonl);
  int lines = 0;
  for (char ch : csv.str()) lines += ch == '\n';
  CHECK(lines == 2);
  CHECK(jsonl.str().find("\"gamma_min\":8") != std::string::npos);

  std::ostringstream both;
  emit(std::vector<RoundMetrics>{m, n}, both);
  std::istringstream in(both.str());
  const auto back = parse_csv(in);
  REQUIRE(back.size() == 2);
  CHECK(back[0] == to_csv_record(m));
  CHECK(back[1] == to_csv_record(n));
  CHECK(back[0].delta_sq_mean == m.delta_sq_mean());

  std::istringstream wrong("round,loss\n1,2\n");
  CHECK_THROWS_AS(parse_csv(wrong), FormatError);

  RoundMetrics nan = m;
  nan.global_loss = std::nan("");
  std::ostringstream j;
  write_jsonl_row(j, nan);
  CHECK(j.str().find("null") != std::string::npos);
}
