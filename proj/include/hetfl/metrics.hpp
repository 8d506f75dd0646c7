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

#ifndef HETFL_METRICS_HPP_
#define HETFL_METRICS_HPP_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hetfl/data.hpp"
#include "hetfl/mask.hpp"
#include "hetfl/nn.hpp"
#include "hetfl/pruning.hpp"

namespace hetfl::metrics {

// Retained parameter count (kept weights plus kept biases) and FLOPs, one
// multiply-accumulate per kept weight-matrix entry. Bias additions are not
// counted as FLOPs.
struct ModelAccount {
  std::int64_t params = 0;
  std::int64_t flops = 0;

  bool operator==(const ModelAccount&) const = default;
};

ModelAccount account(const nn::LayerLayout& layout, const Mask& mask);
// Account of the mask `policy` produces on an all-zero model with the
// family's default maskable set.
ModelAccount account(const nn::LayerLayout& layout, const pruning::PruningPolicy& policy);

struct Amortized {
  double params = 0.0;
  double flops = 0.0;
  // mean / full, truncated to two decimals.
  double params_ratio = 0.0;
  double flops_ratio = 0.0;
};

Amortized amortized(std::span<const ModelAccount> per_slot, const ModelAccount& full);

struct ClientModel {
  double weight = 0.0;
  const nn::ParamVector* params = nullptr;
  const Mask* mask = nullptr;
  std::span<const std::size_t> test_indices;
};

// sum_i p_i * accuracy of (theta_i * m_i) on client i's own test rows.
// The weights must sum to 1.
double weighted_accuracy(std::span<const ClientModel> clients,
                         const data::Dataset& test,
                         std::size_t test_batch = nn::kDefaultTestBatch);

// Squared L2 norm of the full-batch loss gradient over the listed rows (all
// rows when empty).
double grad_norm_estimate(const nn::ParamVector& params, const data::Dataset& split,
                          std::span<const std::size_t> indices = {});

// Inputs of the convergence-bound calculators. f0 is the expected initial
// loss; avg_theta_norm_sq is (1/Q) sum_q E||theta_q||^2.
struct TheoryConstants {
  double smoothness = 1.0;      // L
  double grad_bound = 1.0;      // G
  double sigma_sq = 0.0;        // gradient noise
  double regions = 1.0;         // K
  double num_clients = 1.0;     // N
  double local_epochs = 1.0;    // T
  double rounds = 1.0;          // Q
  double gamma_star = 1.0;      // minimum coverage index
  double delta_sq = 0.0;        // pruning-noise bound
  double avg_theta_norm_sq = 0.0;
  double f0 = 1.0;

  void validate() const;
};

// Divisor of the V0 / U0 term: Q or sqrt(Q).
enum class BoundReading { kOverRounds, kOverSqrtRounds };

// IID bound: G0/sqrt(TQ) + V0/Q + (I0/gamma*) * delta^2 * avg_theta_norm_sq,
// G0 = 4 f0 + 6 L N sigma^2 / gamma*^2, V0 = 3 L^2 N G / gamma*, I0 = 3 L^2 N.
double theorem1_rhs(const TheoryConstants& c,
                    BoundReading reading = BoundReading::kOverRounds);
// Non-IID bound: H0/sqrt(TQ) + U0/Q + sigma^2 * I0 * delta^2 * avg_theta_norm_sq,
// H0 = 4 f0 + 6 L K sigma^2, U0 = 3 L^2 N G.
double theorem2_rhs(const TheoryConstants& c,
                    BoundReading reading = BoundReading::kOverRounds);

struct RoundMetrics {
  int round = 0;
  double global_loss = 0.0;
  double global_accuracy = 0.0;
  double local_weighted_accuracy = 0.0;
  std::size_t gamma_min = 0;
  std::vector<double> delta_sq;       // per slot
  std::vector<double> mask_density;   // per slot
  double grad_norm_sq = 0.0;
  double amortized_params = 0.0;
  double amortized_flops = 0.0;
  std::size_t uncovered_params = 0;

  double delta_sq_mean() const;
};

// One CSV row.
struct CsvRecord {
  int round = 0;
  double loss = 0.0;
  double acc_global = 0.0;
  double acc_local = 0.0;
  std::size_t gamma_min = 0;
  double delta_sq_mean = 0.0;
  double grad_norm_sq = 0.0;
  double params_amortized = 0.0;
  double flops_amortized = 0.0;

  bool operator==(const CsvRecord&) const = default;
};

CsvRecord to_csv_record(const RoundMetrics& m);

inline constexpr const char* kCsvHeader =
    "round,loss,acc_global,acc_local,gamma_min,delta_sq_mean,grad_norm_sq,"
    "params_amortized,flops_amortized";

// %.17g, enough digits to round-trip any double.
std::string format_real(double x);

void write_csv_header(std::ostream& out);
void write_csv_row(std::ostream& out, const RoundMetrics& m);
void write_jsonl_row(std::ostream& out, const RoundMetrics& m);

// Writes the header and all rows.
void emit(std::span<const RoundMetrics> records, std::ostream& csv,
          std::ostream* jsonl = nullptr);

// Throws FormatError on a header mismatch or a malformed row.
std::vector<CsvRecord> parse_csv(std::istream& in);

}  // namespace hetfl::metrics

#endif  // HETFL_METRICS_HPP_
