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

#ifndef HETFL_CLI_HPP_
#define HETFL_CLI_HPP_

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hetfl/federation.hpp"
#include "hetfl/metrics.hpp"
#include "hetfl/pruning.hpp"

namespace hetfl::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitCoverage = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitCheckFailed = 4;

// Environment variable naming the default output directory of `run`.
inline constexpr const char* kOutDirEnv = "HETFL_OUT_DIR";

enum class DatasetKind { kSynth, kIdx };

struct DatasetSpec {
  DatasetKind kind = DatasetKind::kSynth;
  std::size_t synth_classes = 10;
  std::size_t synth_samples_per_class = 100;
  std::size_t synth_test_samples_per_class = 50;
  std::size_t synth_dim = 20;
  double synth_spread = 0.3;
  std::uint64_t synth_seed = 0;
  std::string train_images, train_labels, test_images, test_labels;
  // Keep only the first N samples of a split; 0 keeps all.
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;
};

struct RunConfig {
  federation::FederationConfig federation;
  DatasetSpec dataset;
  std::string out;  // empty: $HETFL_OUT_DIR, then "hetfl_out"
  std::vector<std::uint64_t> seeds{0};
};

// Flat JSON object; keys are the field names above (FederationConfig and
// DatasetSpec fields by name, plus "dataset", "out" and "seeds"). Relative
// dataset paths are resolved against `base_dir`. Throws ConfigError.
RunConfig parse_run_config(std::string_view json_text, const std::string& base_dir = "");
RunConfig load_run_config(const std::string& path);
// `value` is read as JSON when it parses, as a bare string otherwise.
void apply_override(RunConfig& config, const std::string& key, const std::string& value);

struct LoadedData {
  data::Dataset train;
  data::Dataset test;
};
LoadedData load_datasets(const DatasetSpec& spec);

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<metrics::RoundMetrics> metrics;
  std::string csv_path;
  std::string jsonl_path;
};

// Runs one federation per seed, writing metrics_seed<S>.csv/.jsonl and
// summary.json under the output directory.
std::vector<SeedResult> run_experiment(const RunConfig& config, std::ostream& log);

// One consistent row of the MNIST accounting tables.
struct TableRow {
  pruning::Family family;
  const char* codename;
  std::int64_t params;
  std::int64_t flops;
  std::optional<std::size_t> gamma_min;
};

std::span<const TableRow> table_fixture();

struct AccountReport {
  std::vector<metrics::ModelAccount> per_slot;
  metrics::Amortized amortized;
  std::size_t gamma_min = 0;
  // Number of kept-segment holders per quartile, S1..S4.
  std::array<std::size_t, 4> segment_coverage{};
};

// Pure function of its arguments: masks are built on an all-zero model.
AccountReport account_codename(std::string_view codename, pruning::Family family,
                               const nn::LayerLayout& layout);

std::vector<std::size_t> parse_layout(std::string_view text);

struct SelfCheckOptions {
  std::uint64_t seed = 7;
  // Perturbs the analytic gradient before the finite-difference comparison.
  bool corrupt_gradient = false;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

std::vector<CheckResult> selfcheck(const SelfCheckOptions& options);

// Entry point of the `hetfl` executable; args exclude the program name.
int main_entry(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace hetfl::cli

#endif  // HETFL_CLI_HPP_
