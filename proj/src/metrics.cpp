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

#include "hetfl/metrics.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "hetfl/error.hpp"

namespace hetfl::metrics {

ModelAccount account(const nn::LayerLayout& layout, const Mask& mask) {
  if (mask.size() != layout.total()) throw ShapeError("account: mask length");
  ModelAccount a;
  a.params = static_cast<std::int64_t>(mask.count_ones());
  for (const auto& s : layout.layers()) {
    for (std::size_t k = 0; k < s.weight_len; ++k) {
      if (mask[s.weight_start + k]) ++a.flops;
    }
  }
  return a;
}

ModelAccount account(const nn::LayerLayout& layout,
                     const pruning::PruningPolicy& policy) {
  const nn::ParamVector zeros(layout);
  const auto maskable = policy.family == pruning::Family::kWeight
                            ? pruning::first_layer_weights(layout)
                            : pruning::first_hidden_neurons(layout);
  return account(layout, pruning::generate_mask(policy, zeros, maskable, 1));
}

Amortized amortized(std::span<const ModelAccount> per_slot, const ModelAccount& full) {
  if (per_slot.empty()) throw InvalidArgument("amortized: no slots");
  if (full.params <= 0 || full.flops <= 0) {
    throw InvalidArgument("amortized: full model account must be positive");
  }
  std::int64_t params = 0;
  std::int64_t flops = 0;
  for (const auto& a : per_slot) {
    params += a.params;
    flops += a.flops;
  }
  const auto n = static_cast<std::int64_t>(per_slot.size());
  Amortized out;
  out.params = static_cast<double>(params) / static_cast<double>(n);
  out.flops = static_cast<double>(flops) / static_cast<double>(n);
  // Integer division truncates the percentage exactly.
  out.params_ratio = static_cast<double>(params * 100 / (n * full.params)) / 100.0;
  out.flops_ratio = static_cast<double>(flops * 100 / (n * full.flops)) / 100.0;
  return out;
}

double weighted_accuracy(std::span<const ClientModel> clients,
                         const data::Dataset& test, std::size_t test_batch) {
  if (clients.empty()) throw InvalidArgument("weighted_accuracy: no clients");
  double weight_sum = 0.0;
  for (const auto& c : clients) {
    if (c.weight < 0.0) throw InvalidArgument("weighted_accuracy: negative weight");
    weight_sum += c.weight;
  }
  if (std::abs(weight_sum - 1.0) > 1e-9) {
    throw InvalidArgument("weighted_accuracy: weights sum to " +
                          std::to_string(weight_sum) + ", expected 1");
  }
  double acc = 0.0;
  for (const auto& c : clients) {
    if (c.params == nullptr || c.mask == nullptr) {
      throw InvalidArgument("weighted_accuracy: client without a model");
    }
    acc += c.weight *
           nn::evaluate(*c.params, *c.mask, test, c.test_indices, test_batch).accuracy;
  }
  return acc;
}

double grad_norm_estimate(const nn::ParamVector& params, const data::Dataset& split,
                          std::span<const std::size_t> indices) {
  const auto g = nn::full_gradient(params, split, indices);
  double sq = 0.0;
  for (double x : g.grad) sq += x * x;
  return sq;
}

void TheoryConstants::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw InvalidArgument(std::string(name) + " must be positive");
  };
  auto non_negative = [](double v, const char* name) {
    if (!(v >= 0.0)) throw InvalidArgument(std::string(name) + " must be non-negative");
  };
  if (gamma_star == 0.0) throw InvalidArgument("gamma_star is 0: the bound is undefined");
  positive(smoothness, "L");
  positive(regions, "K");
  positive(num_clients, "N");
  positive(local_epochs, "T");
  positive(rounds, "Q");
  positive(gamma_star, "gamma_star");
  non_negative(grad_bound, "G");
  non_negative(sigma_sq, "sigma_sq");
  non_negative(avg_theta_norm_sq, "avg_theta_norm_sq");
  non_negative(f0, "F0");
  if (!(delta_sq >= 0.0 && delta_sq < 1.0)) {
    throw InvalidArgument("delta_sq must lie in [0, 1)");
  }
}

namespace {

double drift_divisor(const TheoryConstants& c, BoundReading reading) {
  return reading == BoundReading::kOverRounds ? c.rounds : std::sqrt(c.rounds);
}

}  // namespace

double theorem1_rhs(const TheoryConstants& c, BoundReading reading) {
  c.validate();
  const double L = c.smoothness;
  const double N = c.num_clients;
  const double g = c.gamma_star;
  const double g0 = 4.0 * c.f0 + 6.0 * L * N * c.sigma_sq / (g * g);
  const double v0 = 3.0 * L * L * N * c.grad_bound / g;
  const double i0 = 3.0 * L * L * N;
  return g0 / std::sqrt(c.local_epochs * c.rounds) + v0 / drift_divisor(c, reading) +
         (i0 / g) * c.delta_sq * c.avg_theta_norm_sq;
}

double theorem2_rhs(const TheoryConstants& c, BoundReading reading) {
  c.validate();
  const double L = c.smoothness;
  const double N = c.num_clients;
  const double h0 = 4.0 * c.f0 + 6.0 * L * c.regions * c.sigma_sq;
  const double u0 = 3.0 * L * L * N * c.grad_bound;
  const double i0 = 3.0 * L * L * N;
  return h0 / std::sqrt(c.local_epochs * c.rounds) + u0 / drift_divisor(c, reading) +
         c.sigma_sq * i0 * c.delta_sq * c.avg_theta_norm_sq;
}

double RoundMetrics::delta_sq_mean() const {
  if (delta_sq.empty()) return 0.0;
  return std::accumulate(delta_sq.begin(), delta_sq.end(), 0.0) /
         static_cast<double>(delta_sq.size());
}

CsvRecord to_csv_record(const RoundMetrics& m) {
  return {m.round,         m.global_loss,  m.global_accuracy,
          m.local_weighted_accuracy,      m.gamma_min,
          m.delta_sq_mean(), m.grad_norm_sq, m.amortized_params,
          m.amortized_flops};
}

std::string format_real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace {

std::string json_real(double x) { return std::isfinite(x) ? format_real(x) : "null"; }

std::string json_array(const std::vector<double>& xs) {
  std::string out = "[";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += json_real(xs[i]);
  }
  return out + "]";
}

}  // namespace

void write_csv_header(std::ostream& out) { out << kCsvHeader << '\n'; }

void write_csv_row(std::ostream& out, const RoundMetrics& m) {
  const auto r = to_csv_record(m);
  out << r.round << ',' << format_real(r.loss) << ',' << format_real(r.acc_global)
      << ',' << format_real(r.acc_local) << ',' << r.gamma_min << ','
      << format_real(r.delta_sq_mean) << ',' << format_real(r.grad_norm_sq) << ','
      << format_real(r.params_amortized) << ',' << format_real(r.flops_amortized)
      << '\n';
}

void write_jsonl_row(std::ostream& out, const RoundMetrics& m) {
  const auto r = to_csv_record(m);
  out << "{\"round\":" << r.round << ",\"loss\":" << json_real(r.loss)
      << ",\"acc_global\":" << json_real(r.acc_global)
      << ",\"acc_local\":" << json_real(r.acc_local)
      << ",\"gamma_min\":" << r.gamma_min
      << ",\"delta_sq_mean\":" << json_real(r.delta_sq_mean)
      << ",\"grad_norm_sq\":" << json_real(r.grad_norm_sq)
      << ",\"params_amortized\":" << json_real(r.params_amortized)
      << ",\"flops_amortized\":" << json_real(r.flops_amortized)
      << ",\"delta_sq\":" << json_array(m.delta_sq)
      << ",\"mask_density\":" << json_array(m.mask_density)
      << ",\"uncovered_params\":" << m.uncovered_params << "}\n";
}

void emit(std::span<const RoundMetrics> records, std::ostream& csv,
          std::ostream* jsonl) {
  write_csv_header(csv);
  for (const auto& m : records) {
    write_csv_row(csv, m);
    if (jsonl != nullptr) write_jsonl_row(*jsonl, m);
  }
  csv.flush();
  if (jsonl != nullptr) jsonl->flush();
  if (!csv || (jsonl != nullptr && !*jsonl)) throw IoError("metrics write failed");
}

namespace {

double parse_real(const std::string& field, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (field.empty() || end != field.c_str() + field.size()) {
    throw FormatError("line " + std::to_string(line) + ": bad number '" + field + "'");
  }
  return v;
}

template <typename Int>
Int parse_int(const std::string& field, std::size_t line) {
  Int v{};
  auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || p != field.data() + field.size()) {
    throw FormatError("line " + std::to_string(line) + ": bad integer '" + field + "'");
  }
  return v;
}

}  // namespace

std::vector<CsvRecord> parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw FormatError("metrics CSV: unexpected header");
  }
  std::vector<CsvRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 9) {
      throw FormatError("line " + std::to_string(lineno) + ": expected 9 fields");
    }
    CsvRecord r;
    r.round = parse_int<int>(f[0], lineno);
    r.loss = parse_real(f[1], lineno);
    r.acc_global = parse_real(f[2], lineno);
    r.acc_local = parse_real(f[3], lineno);
    r.gamma_min = parse_int<std::size_t>(f[4], lineno);
    r.delta_sq_mean = parse_real(f[5], lineno);
    r.grad_norm_sq = parse_real(f[6], lineno);
    r.params_amortized = parse_real(f[7], lineno);
    r.flops_amortized = parse_real(f[8], lineno);
    out.push_back(r);
  }
  return out;
}

}  // namespace hetfl::metrics
