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


// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "fedavg_reference.hpp"
#include "hetfl/cli.hpp"
#include "hetfl/error.hpp"

using namespace hetfl;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = true;
  std::string detail;
};

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

Verdict table_accounting() {
  const auto start = Clock::now();
  const nn::LayerLayout mnist({784, 200, 10});
  int bad = 0;
  std::map<std::pair<pruning::Family, std::string>, std::size_t> gamma;
  for (const auto& row : cli::table_fixture()) {
    const auto rep = cli::account_codename(row.codename, row.family, mnist);
    bad += rep.amortized.params != static_cast<double>(row.params);
    bad += rep.amortized.flops != static_cast<double>(row.flops);
    if (row.gamma_min) bad += rep.gamma_min != *row.gamma_min;
    gamma[{row.family, row.codename}] = rep.gamma_min;
  }
  const std::pair<const char*, std::size_t> required[] = {
      {"1111111111", 10}, {"1111114444", 6}, {"1111223344", 8}, {"1111234567", 7},
      {"1111556677", 6},  {"1114556677", 5}, {"1234556677", 5}, {"2233445677", 5},
      {"1111444444", 4}};
  for (const auto& [code, want] : required) {
    for (auto fam : {pruning::Family::kWeight, pruning::Family::kNeuron}) {
      const auto it = gamma.find({fam, code});
      bad += it == gamma.end() || it->second != want;
    }
  }
  const double secs = seconds_since(start);
  std::ostringstream d;
  d << cli::table_fixture().size() << " rows, " << bad << " mismatches, " << secs << " s";
  return {bad == 0 && secs < 1.0, d.str()};
}

Verdict selfcheck_subset(std::initializer_list<std::string> names) {
  Verdict v;
  for (const auto& r : cli::selfcheck({})) {
    if (std::find(names.begin(), names.end(), r.name) == names.end()) continue;
    v.pass = v.pass && r.passed;
    v.detail += (v.detail.empty() ? "" : "; ") + r.name + ": " + r.detail;
  }
  return v;
}

federation::FederatedData blobs(const federation::FederationConfig& c) {
  return federation::make_federated_data(data::synth_blobs(10, 100, 20, 0.3, 0),
                                         data::synth_blobs(10, 50, 20, 0.3, 1), c);
}

Verdict fedavg_reduction() {
  federation::FederationConfig c;
  c.num_clients = 20;
  c.participation_ratio = 0.5;
  c.codename = "1111111111";
  c.momentum = 0.0;
  c.rounds = 5;
  c.seed = 1;
  const auto fd = blobs(c);
  const auto want = testing::fedavg_reference(c, fd);
  auto state = federation::init_state(c, c.layout(20, 10));
  int identical = 0;
  for (int q = 1; q <= c.rounds; ++q) {
    federation::run_round(state, c, fd);
    identical += bit_equal(state.params.values, want[static_cast<std::size_t>(q)].values);
  }
  return {identical == c.rounds, std::to_string(identical) + "/5 rounds bit-identical"};
}

Verdict coverage_necessity() {
  federation::FederationConfig c;
  c.num_clients = 20;
  c.participation_ratio = 0.5;
  c.rounds = 5;
  c.family = pruning::Family::kFixed;
  c.codename = "4444444444";
  const auto fd = blobs(c);
  const auto layout = c.layout(20, 10);
  const auto r = federation::run(c, fd);
  // FS ranks neurons in natural order, so S4 is the last quarter of hidden units.
  std::size_t changed = 0, checked = 0;
  for (std::size_t j = 150; j < 200; ++j) {
    for (auto i : pruning::neuron_indices(layout, j)) {
      ++checked;
      changed += std::memcmp(&r.final_params.values[i], &r.initial_params.values[i],
                             sizeof(double)) != 0;
    }
  }
  bool flagged = true;
  for (const auto& m : r.metrics) flagged = flagged && m.gamma_min == 0 && m.uncovered_params == checked;
  bool aborted = false;
  c.uncovered_region_action = federation::UncoveredAction::kError;
  try {
    federation::run(c, fd);
  } catch (const CoverageViolation& e) {
    aborted = e.round() == 1;
  }
  std::ostringstream d;
  d << changed << "/" << checked << " uncovered params changed, gamma_min=0 flagged: "
    << (flagged ? "yes" : "no") << ", error action aborts: " << (aborted ? "yes" : "no");
  return {changed == 0 && flagged && aborted, d.str()};
}

Verdict convergence() {
  federation::FederationConfig c;
  c.num_clients = 20;
  c.participation_ratio = 0.5;
  c.codename = "1111223344";
  c.rounds = 30;
  c.local_epochs = 5;
  const auto r = federation::run(c, blobs(c));
  const double acc = r.metrics.back().global_accuracy;
  const double drop = r.metrics.front().grad_norm_sq / r.metrics.back().grad_norm_sq;
  bool synth_ok = acc > 0.90 && drop >= 10.0;

  const std::string dir = HETFL_SOURCE_DIR "/data/mnist_subset/";
  const auto train = data::load_idx(dir + "train-images-idx3-ubyte.gz", dir + "train-labels-idx1-ubyte.gz");
  const auto test = data::load_idx(dir + "test-images-idx3-ubyte.gz", dir + "test-labels-idx1-ubyte.gz");
  federation::FederationConfig m;
  m.rounds = 30;
  auto mean_final = [&](const std::string& codename) {
    double sum = 0.0;
    for (std::uint64_t seed : {0, 1, 2}) {
      m.codename = codename;
      m.seed = seed;
      sum += federation::run(m, federation::make_federated_data(train, test, m))
                 .metrics.back()
                 .global_accuracy;
    }
    return sum / 3.0;
  };
  const double g8 = mean_final("1111223344");
  const double g4 = mean_final("1111444444");
  const bool trend_ok = g8 >= g4 - 0.005;
  std::ostringstream d;
  d << "synthetic acc " << acc << ", grad-norm drop x" << drop << "; MNIST subset mean acc "
    << "gamma8 " << g8 << " vs gamma4 " << g4;
  return {synth_ok && trend_ok, d.str()};
}

double noise(const std::vector<double>& t, const Mask& m) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    den += t[i] * t[i];
    if (!m[i]) num += t[i] * t[i];
  }
  return den == 0.0 ? 0.0 : num / den;
}

Verdict pruning_noise_properties() {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n(0.0, 1.0);
  int range_bad = 0, optimal_bad = 0, monotone_bad = 0;

  const nn::LayerLayout layout({12, 10, 4});
  for (int trial = 0; trial < 100; ++trial) {
    nn::ParamVector p(layout);
    for (auto& v : p.values) v = n(rng);
    for (auto fam : {pruning::Family::kWeight, pruning::Family::kNeuron, pruning::Family::kFixed}) {
      const auto ms = fam == pruning::Family::kWeight ? pruning::first_layer_weights(layout)
                                                      : pruning::first_hidden_neurons(layout);
      for (char d = '1'; d <= '7'; ++d) {
        const auto mask = pruning::generate_mask({fam, pruning::segments_for_digit(d), {}}, p, ms, 1);
        const double ds = pruning::pruning_noise(p, mask).delta_sq;
        range_bad += !(ds >= 0.0 && ds < 1.0);
      }
    }
    // Monotonicity: a superset of kept segments never discards more energy.
    const auto fam = static_cast<pruning::Family>(trial % 3);
    const auto ms = fam == pruning::Family::kWeight ? pruning::first_layer_weights(layout)
                                                    : pruning::first_hidden_neurons(layout);
    const auto seg = pruning::quartile_segments(pruning::rank_maskable(p, ms, fam));
    std::uniform_int_distribution<unsigned> sub(0, 15);
    const pruning::SegmentSet a(sub(rng));
    const pruning::SegmentSet b = a | pruning::SegmentSet(sub(rng));
    monotone_bad += pruning::pruning_noise(p, pruning::mask_from_segments(seg, b, layout.total())).delta_sq >
                    pruning::pruning_noise(p, pruning::mask_from_segments(seg, a, layout.total())).delta_sq;
  }

  // Exhaustive optimality on maskable sets of 4..16 coordinates.
  for (std::size_t k = 4; k <= 16; ++k) {
    const nn::LayerLayout flat({k - 1, 1});
    nn::ParamVector p(flat);
    for (auto& v : p.values) v = n(rng);
    std::vector<double> best(k + 1, std::numeric_limits<double>::infinity());
    for (std::uint32_t bits = 0; bits < (1u << k); ++bits) {
      std::vector<std::uint8_t> b(k);
      for (std::size_t i = 0; i < k; ++i) b[i] = (bits >> i) & 1u;
      const Mask m(b);
      best[m.count_ones()] = std::min(best[m.count_ones()], noise(p.values, m));
    }
    pruning::MaskableSet all;
    all.indices.resize(k);
    std::iota(all.indices.begin(), all.indices.end(), std::size_t{0});
    const auto seg = pruning::quartile_segments(pruning::rank_maskable(p, all, pruning::Family::kWeight));
    for (unsigned prefix : {1u, 3u, 7u, 15u}) {
      const auto m = pruning::mask_from_segments(seg, pruning::SegmentSet(prefix), k);
      optimal_bad += pruning::pruning_noise(p, m).delta_sq > best[m.count_ones()] + 1e-15;
    }
  }
  std::ostringstream d;
  d << "range violations " << range_bad << ", non-optimal WP masks " << optimal_bad
    << ", monotonicity violations " << monotone_bad;
  return {range_bad == 0 && optimal_bad == 0 && monotone_bad == 0, d.str()};
}

Verdict theorem_bounds() {
  using metrics::TheoryConstants;
  auto unit = [] {
    TheoryConstants c;
    c.smoothness = c.grad_bound = c.num_clients = c.regions = c.gamma_star = 1.0;
    c.local_epochs = 1.0;
    c.f0 = 1.0;
    return c;
  };
  int bad = 0;
  auto expect = [&bad](double got, double want) { bad += std::abs(got - want) > 1e-12; };

  auto a = unit();
  a.rounds = 4;
  expect(metrics::theorem1_rhs(a), 2.75);
  auto b = unit();
  b.sigma_sq = 1.0;
  expect(metrics::theorem2_rhs(b), 13.0);
  TheoryConstants c;
  c.smoothness = 2;
  c.grad_bound = 3;
  c.sigma_sq = 0.5;
  c.num_clients = 4;
  c.regions = 3;
  c.local_epochs = 2;
  c.rounds = 8;
  c.gamma_star = 2;
  c.delta_sq = 0.1;
  c.avg_theta_norm_sq = 5;
  c.f0 = 1.5;
  expect(metrics::theorem1_rhs(c), 24.0);
  expect(metrics::theorem2_rhs(c), 36.0);
  auto e = unit();
  e.local_epochs = 4;
  e.rounds = 16;
  e.f0 = 2;
  expect(metrics::theorem1_rhs(e), 1.1875);

  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.1, 5.0), dd(0.0, 0.45);
  int props_bad = 0;
  for (int i = 0; i < 1000; ++i) {
    TheoryConstants r;
    r.smoothness = u(rng);
    r.grad_bound = u(rng);
    r.sigma_sq = u(rng);
    r.num_clients = std::ceil(4 * u(rng));
    r.regions = std::ceil(u(rng));
    r.local_epochs = std::ceil(u(rng));
    r.rounds = std::ceil(10 * u(rng));
    r.gamma_star = std::ceil(u(rng));
    r.delta_sq = dd(rng);
    r.avg_theta_norm_sq = u(rng);
    r.f0 = u(rng);
    auto wider = r;
    wider.gamma_star *= 2;
    auto noisier = r;
    noisier.delta_sq *= 2;
    props_bad += metrics::theorem1_rhs(wider) > metrics::theorem1_rhs(r);
    props_bad += metrics::theorem1_rhs(noisier) < metrics::theorem1_rhs(r);
    props_bad += metrics::theorem2_rhs(noisier) < metrics::theorem2_rhs(r);
  }
  std::ostringstream d;
  d << "5 fixed sets, " << bad << " off by >1e-12; " << props_bad
    << " monotonicity violations over 1000 random sets";
  return {bad == 0 && props_bad == 0, d.str()};
}

Verdict determinism() {
  const auto root = fs::temp_directory_path() / "hetfl_acceptance_determinism";
  fs::remove_all(root);
  const std::string cfg = HETFL_SOURCE_DIR "/configs/synth_quickstart.json";
  std::ostringstream sink;
  std::vector<std::string> bodies;
  for (const char* sub : {"a", "b"}) {
    const std::vector<std::string> args{"run", "--config", cfg, "--seeds", "3",
                                        "--out", (root / sub).string()};
    if (cli::main_entry(args, sink, sink) != cli::kExitOk) return {false, "run failed: " + sink.str()};
    std::ifstream in(root / sub / "metrics_seed3.csv", std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    bodies.push_back(s.str());
  }
  fs::remove_all(root);
  const bool same = !bodies[0].empty() && bodies[0] == bodies[1];
  return {same, same ? std::to_string(bodies[0].size()) + " identical bytes" : "CSV outputs differ"};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Verdict()>> criteria[] = {
      {"1 table accounting", table_accounting},
      {"2 gradient correctness", [] { return selfcheck_subset({"gradient_finite_difference"}); }},
      {"3 aggregation and region oracles",
       [] { return selfcheck_subset({"aggregation", "region_partition"}); }},
      {"4 FedAvg reduction", fedavg_reduction},
      {"5 coverage necessity", coverage_necessity},
      {"6 desk-scale convergence", convergence},
      {"7 pruning-noise properties", pruning_noise_properties},
      {"8 theorem-bound calculator", theorem_bounds},
      {"9 determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    const auto start = Clock::now();
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << "  (" << v.detail << "; "
              << seconds_since(start) << " s)" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
