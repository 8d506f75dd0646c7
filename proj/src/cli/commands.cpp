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

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>

#include "CLI11.hpp"
#include "hetfl/cli.hpp"
#include "hetfl/error.hpp"
#include "json.hpp"

namespace hetfl::cli {

namespace fs = std::filesystem;

LoadedData load_datasets(const DatasetSpec& spec) {
  LoadedData out;
  if (spec.kind == DatasetKind::kSynth) {
    out.train = data::synth_blobs(spec.synth_classes, spec.synth_samples_per_class,
                                  spec.synth_dim, spec.synth_spread, spec.synth_seed);
    out.test = data::synth_blobs(spec.synth_classes, spec.synth_test_samples_per_class,
                                 spec.synth_dim, spec.synth_spread, spec.synth_seed + 1);
  } else {
    for (const auto* p : {&spec.train_images, &spec.train_labels, &spec.test_images,
                          &spec.test_labels}) {
      if (p->empty()) {
        throw ConfigError("idx dataset needs train_images, train_labels, test_images "
                          "and test_labels");
      }
    }
    out.train = data::load_idx(spec.train_images, spec.train_labels);
    out.test = data::load_idx(spec.test_images, spec.test_labels);
  }
  auto limit = [](data::Dataset& ds, std::size_t n) {
    if (n == 0 || n >= ds.size()) return;
    std::vector<std::size_t> keep(n);
    std::iota(keep.begin(), keep.end(), std::size_t{0});
    ds = ds.subset(keep);
  };
  limit(out.train, spec.train_limit);
  limit(out.test, spec.test_limit);
  return out;
}

namespace {

std::string output_dir(const RunConfig& config) {
  if (!config.out.empty()) return config.out;
  if (const char* env = std::getenv(kOutDirEnv); env != nullptr && *env != '\0') return env;
  return "hetfl_out";
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  return f;
}

}  // namespace

std::vector<SeedResult> run_experiment(const RunConfig& config, std::ostream& log) {
  config.federation.validate();
  if (config.seeds.empty()) throw ConfigError("at least one seed is required");
  const fs::path dir = output_dir(config);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create output directory " + dir.string());
  }

  const auto loaded = load_datasets(config.dataset);
  std::vector<SeedResult> results;
  for (auto seed : config.seeds) {
    auto fed = config.federation;
    fed.seed = seed;
    const auto fdata = federation::make_federated_data(loaded.train, loaded.test, fed);

    SeedResult r;
    r.seed = seed;
    r.csv_path = (dir / ("metrics_seed" + std::to_string(seed) + ".csv")).string();
    r.jsonl_path = (dir / ("metrics_seed" + std::to_string(seed) + ".jsonl")).string();
    auto csv = open_out(r.csv_path);
    auto jsonl = open_out(r.jsonl_path);
    metrics::write_csv_header(csv);

    log << "seed " << seed << ": " << fed.rounds << " rounds, codename " << fed.codename
        << " (" << pruning::to_string(fed.family) << ")\n";
    auto sink = [&](const metrics::RoundMetrics& m) {
      metrics::write_csv_row(csv, m);
      metrics::write_jsonl_row(jsonl, m);
      log << "  round " << m.round << " loss " << m.global_loss << " acc "
          << m.global_accuracy << " gamma_min " << m.gamma_min << '\n';
    };
    auto warn = [&](std::string_view msg) { log << "warning: " << msg << '\n'; };
    auto result = federation::run(fed, fdata, sink, warn);
    csv.flush();
    jsonl.flush();
    if (!csv || !jsonl) throw IoError("failed writing metrics for seed " + std::to_string(seed));
    r.metrics = std::move(result.metrics);
    results.push_back(std::move(r));
  }

  nlohmann::ordered_json summary;
  std::vector<double> acc, local_acc;
  for (const auto& r : results) {
    acc.push_back(r.metrics.empty() ? 0.0 : r.metrics.back().global_accuracy);
    local_acc.push_back(r.metrics.empty() ? 0.0 : r.metrics.back().local_weighted_accuracy);
  }
  auto mean_std = [](const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return std::pair{mean, xs.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0};
  };
  const auto [acc_mean, acc_std] = mean_std(acc);
  const auto [local_mean, local_std] = mean_std(local_acc);
  summary["codename"] = config.federation.codename;
  summary["family"] = std::string(pruning::to_string(config.federation.family));
  summary["rounds"] = config.federation.rounds;
  summary["seeds"] = config.seeds;
  summary["final_accuracy"] = acc;
  summary["final_local_accuracy"] = local_acc;
  summary["mean_final_accuracy"] = acc_mean;
  summary["std_final_accuracy"] = acc_std;
  summary["mean_final_local_accuracy"] = local_mean;
  summary["std_final_local_accuracy"] = local_std;
  auto f = open_out(dir / "summary.json");
  f << summary.dump(2) << '\n';
  if (!f) throw IoError("failed writing summary.json");
  return results;
}

namespace {

nn::LayerLayout layout_from(const std::string& text) {
  return nn::LayerLayout(parse_layout(text));
}

void print_report(std::ostream& out, std::string_view codename, pruning::Family family,
                  const AccountReport& rep) {
  out << "codename " << codename << "  family " << pruning::to_string(family) << '\n';
  out << "slot digit params flops\n";
  for (std::size_t k = 0; k < rep.per_slot.size(); ++k) {
    out << k << ' ' << codename[k] << ' ' << rep.per_slot[k].params << ' '
        << rep.per_slot[k].flops << '\n';
  }
  out << "amortized_params " << metrics::format_real(rep.amortized.params) << '\n';
  out << "amortized_flops " << metrics::format_real(rep.amortized.flops) << '\n';
  char ratios[64];
  std::snprintf(ratios, sizeof ratios, "%.2f %.2f", rep.amortized.params_ratio,
                rep.amortized.flops_ratio);
  out << "ratio_params_flops " << ratios << '\n';
  out << "segment_coverage " << rep.segment_coverage[0] << ' ' << rep.segment_coverage[1]
      << ' ' << rep.segment_coverage[2] << ' ' << rep.segment_coverage[3] << '\n';
  out << "gamma_min " << rep.gamma_min << '\n';
}

// Returns the number of mismatching cells.
int check_row(const TableRow& row, const AccountReport& rep, std::ostream& out) {
  int bad = 0;
  auto cell = [&](const char* name, double got, double want) {
    if (got != want) {
      out << "MISMATCH " << pruning::to_string(row.family) << ' ' << row.codename << ' '
          << name << ": computed " << metrics::format_real(got) << ", table "
          << metrics::format_real(want) << '\n';
      ++bad;
    }
  };
  cell("params", rep.amortized.params, static_cast<double>(row.params));
  cell("flops", rep.amortized.flops, static_cast<double>(row.flops));
  if (row.gamma_min) {
    cell("gamma_min", static_cast<double>(rep.gamma_min), static_cast<double>(*row.gamma_min));
  }
  return bad;
}

int cmd_account(const std::string& codename, const std::string& family_name,
                const std::string& layout_text, bool check_table, std::ostream& out) {
  const auto layout = layout_from(layout_text);
  if (codename.empty()) {
    if (!check_table) throw ConfigError("account needs --codename (or --check-table)");
    if (layout.sizes() != std::vector<std::size_t>{784, 200, 10}) {
      throw ConfigError("the table fixture describes the 784,200,10 layout");
    }
    int bad = 0;
    for (const auto& row : table_fixture()) {
      bad += check_row(row, account_codename(row.codename, row.family, layout), out);
    }
    out << "table check: " << table_fixture().size() << " rows, " << bad << " mismatches\n";
    return bad == 0 ? kExitOk : kExitCheckFailed;
  }

  const auto family = pruning::parse_family(family_name);
  const auto rep = account_codename(codename, family, layout);
  print_report(out, codename, family, rep);
  if (!check_table) return kExitOk;
  if (layout.sizes() != std::vector<std::size_t>{784, 200, 10}) {
    throw ConfigError("the table fixture describes the 784,200,10 layout");
  }
  for (const auto& row : table_fixture()) {
    if (row.family == family && codename == row.codename) {
      const int bad = check_row(row, rep, out);
      out << "table check: " << (bad == 0 ? "OK" : "FAILED") << '\n';
      return bad == 0 ? kExitOk : kExitCheckFailed;
    }
  }
  out << "table check: no table row for " << pruning::to_string(family) << ' ' << codename
      << '\n';
  return kExitOk;
}

int cmd_coverage(const std::string& codename, const std::string& family_name,
                 const std::string& layout_text, std::ostream& out) {
  const auto layout = layout_from(layout_text);
  const auto family = pruning::parse_family(family_name);
  const auto policies = pruning::parse_codename(codename, family);
  const nn::ParamVector zeros(layout);
  const auto maskable = family == pruning::Family::kWeight
                            ? pruning::first_layer_weights(layout)
                            : pruning::first_hidden_neurons(layout);
  const auto segments =
      pruning::quartile_segments(pruning::rank_maskable(zeros, maskable, family));
  std::vector<Mask> masks;
  for (const auto& p : policies.per_slot) {
    masks.push_back(pruning::generate_mask(p, segments, layout.total(), 1));
  }
  const auto partition = federation::decompose_regions(masks);
  const auto report = federation::coverage_index(partition);
  out << "codename " << codename << "  family " << pruning::to_string(family) << '\n';
  out << "regions " << partition.regions.size() << '\n';
  for (const auto& r : partition.regions) {
    out << "  size " << r.indices.size() << "  covered_by " << r.slots.size() << "  slots {";
    for (std::size_t i = 0; i < r.slots.size(); ++i) out << (i ? "," : "") << r.slots[i];
    out << "}\n";
  }
  out << "uncovered_params " << report.uncovered_params << '\n';
  out << "gamma_min " << report.gamma_min << '\n';
  return kExitOk;
}

int cmd_selfcheck(const SelfCheckOptions& options, std::ostream& out) {
  bool ok = true;
  for (const auto& r : selfcheck(options)) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << "  (" << r.detail << ")\n";
    ok = ok && r.passed;
  }
  return ok ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main_entry(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Federated learning with heterogeneous pruned client models"};
  app.require_subcommand(1);

  std::string config_path, seeds, out_dir, codename, family = "WP",
                                                    layout = "784,200,10";
  std::string run_codename, run_family;
  std::vector<std::string> sets;
  bool check_table = false;
  SelfCheckOptions check_opts;

  auto* run = app.add_subcommand("run", "Run experiments described by a config file");
  run->add_option("--config", config_path, "JSON config file")->required();
  run->add_option("--seeds", seeds, "Comma-separated seed list");
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--codename", run_codename, "Override the codename");
  run->add_option("--family", run_family, "Override the pruning family");
  run->add_option("--set", sets, "Override any config key: key=value");

  auto* acc = app.add_subcommand("account", "Parameter / FLOP accounting for a codename");
  acc->add_option("--codename", codename, "Policy digits, one per slot");
  acc->add_option("--family", family, "WP, NP or FS");
  acc->add_option("--layout", layout, "Comma-separated layer sizes");
  acc->add_flag("--check-table", check_table, "Compare against the reference accounting table");

  auto* cov = app.add_subcommand("coverage", "Region breakdown and minimum coverage");
  cov->add_option("--codename", codename, "Policy digits, one per slot")->required();
  cov->add_option("--family", family, "WP, NP or FS");
  cov->add_option("--layout", layout, "Comma-separated layer sizes");

  auto* chk = app.add_subcommand("selfcheck", "Randomized oracle checks");
  chk->add_option("--seed", check_opts.seed, "RNG seed");
  chk->add_flag("--inject-gradient-fault", check_opts.corrupt_gradient,
                "Corrupt the analytic gradient (fault injection)");

  std::vector<std::string> argv_store{"hetfl"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) {
      auto config = load_run_config(config_path);
      if (!seeds.empty()) apply_override(config, "seeds", '"' + seeds + '"');
      if (!out_dir.empty()) config.out = out_dir;
      if (!run_codename.empty()) config.federation.codename = run_codename;
      if (!run_family.empty()) apply_override(config, "family", '"' + run_family + '"');
      for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + kv);
        apply_override(config, kv.substr(0, eq), kv.substr(eq + 1));
      }
      run_experiment(config, out);
      return kExitOk;
    }
    if (*acc) return cmd_account(codename, family, layout, check_table, out);
    if (*cov) return cmd_coverage(codename, family, layout, out);
    if (*chk) return cmd_selfcheck(check_opts, out);
  } catch (const CoverageViolation& e) {
    err << "coverage violation: " << e.what() << '\n';
    return kExitCoverage;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const FormatError& e) {
    err << "input error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace hetfl::cli
