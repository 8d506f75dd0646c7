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

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "hetfl/cli.hpp"
#include "hetfl/error.hpp"
#include "json.hpp"

namespace hetfl::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Pre-trained-mask runs are weight pruning whose masks freeze after round 3.
constexpr int kPretrainedFreezeRound = 3;

template <typename T>
T as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type: " + v.dump());
  }
}

std::size_t as_count(const json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError("config key '" + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

std::string resolve(const std::string& path, const std::string& base_dir) {
  if (path.empty() || base_dir.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base_dir) / path).lexically_normal().string();
}

using Setter = std::function<void(RunConfig&, const json&, const std::string& base)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto fed = [&t](const char* key, auto fn) {
      t[key] = [fn, key](RunConfig& c, const json& v, const std::string&) {
        fn(c.federation, v, std::string(key));
      };
    };
    fed("num_clients", [](auto& f, const json& v, const std::string& k) { f.num_clients = as_count(v, k); });
    fed("participation_ratio", [](auto& f, const json& v, const std::string& k) { f.participation_ratio = as<double>(v, k); });
    fed("rounds", [](auto& f, const json& v, const std::string& k) { f.rounds = as<int>(v, k); });
    fed("local_epochs", [](auto& f, const json& v, const std::string& k) { f.local_epochs = as<int>(v, k); });
    fed("local_batch", [](auto& f, const json& v, const std::string& k) { f.local_batch = as_count(v, k); });
    fed("learning_rate", [](auto& f, const json& v, const std::string& k) { f.learning_rate = as<double>(v, k); });
    fed("momentum", [](auto& f, const json& v, const std::string& k) { f.momentum = as<double>(v, k); });
    fed("codename", [](auto& f, const json& v, const std::string& k) {
      f.codename = v.is_number_integer() ? std::to_string(v.get<long long>()) : as<std::string>(v, k);
    });
    fed("family", [](auto& f, const json& v, const std::string& k) {
      auto name = as<std::string>(v, k);
      if (name == "PT" || name == "pt") {
        f.family = pruning::Family::kWeight;
        if (!f.freeze_after_round) f.freeze_after_round = kPretrainedFreezeRound;
        return;
      }
      try {
        f.family = pruning::parse_family(name);
      } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
      }
    });
    fed("freeze_after_round", [](auto& f, const json& v, const std::string& k) {
      if (v.is_null()) {
        f.freeze_after_round.reset();
      } else {
        f.freeze_after_round = as<int>(v, k);
      }
    });
    fed("seed", [](auto& f, const json& v, const std::string& k) { f.seed = as<std::uint64_t>(v, k); });
    fed("partition", [](auto& f, const json& v, const std::string& k) {
      const auto s = as<std::string>(v, k);
      if (s == "iid") {
        f.partition = data::PartitionMode::kIid;
      } else if (s == "label_skew") {
        f.partition = data::PartitionMode::kLabelSkew;
      } else {
        throw ConfigError("partition must be \"iid\" or \"label_skew\"");
      }
    });
    fed("classes_per_client", [](auto& f, const json& v, const std::string& k) { f.classes_per_client = as_count(v, k); });
    fed("uncovered_region_action", [](auto& f, const json& v, const std::string& k) {
      const auto s = as<std::string>(v, k);
      if (s == "error") {
        f.uncovered_region_action = federation::UncoveredAction::kError;
      } else if (s == "warn") {
        f.uncovered_region_action = federation::UncoveredAction::kWarn;
      } else {
        throw ConfigError("uncovered_region_action must be \"error\" or \"warn\"");
      }
    });
    fed("binding", [](auto& f, const json& v, const std::string& k) {
      const auto s = as<std::string>(v, k);
      if (s == "per_round") {
        f.binding = federation::SlotBinding::kPerRound;
      } else if (s == "static") {
        f.binding = federation::SlotBinding::kStatic;
      } else {
        throw ConfigError("binding must be \"per_round\" or \"static\"");
      }
    });
    fed("maskable", [](auto& f, const json& v, const std::string& k) {
      const auto s = as<std::string>(v, k);
      if (s == "first_layer") {
        f.maskable = federation::MaskableChoice::kFirstLayer;
      } else if (s == "all_weights") {
        f.maskable = federation::MaskableChoice::kAllWeights;
      } else {
        throw ConfigError("maskable must be \"first_layer\" or \"all_weights\"");
      }
    });
    fed("hidden_layers", [](auto& f, const json& v, const std::string& k) {
      f.hidden_layers = as<std::vector<std::size_t>>(v, k);
    });
    fed("test_batch", [](auto& f, const json& v, const std::string& k) { f.test_batch = as_count(v, k); });
    fed("threads", [](auto& f, const json& v, const std::string& k) { f.threads = as_count(v, k); });

    t["dataset"] = [](RunConfig& c, const json& v, const std::string&) {
      const auto s = as<std::string>(v, "dataset");
      if (s == "synth") {
        c.dataset.kind = DatasetKind::kSynth;
      } else if (s == "idx") {
        c.dataset.kind = DatasetKind::kIdx;
      } else {
        throw ConfigError("dataset must be \"synth\" or \"idx\"");
      }
    };
    auto ds_count = [&t](const char* key, std::size_t DatasetSpec::*field) {
      t[key] = [key, field](RunConfig& c, const json& v, const std::string&) {
        c.dataset.*field = as_count(v, key);
      };
    };
    ds_count("synth_classes", &DatasetSpec::synth_classes);
    ds_count("synth_samples_per_class", &DatasetSpec::synth_samples_per_class);
    ds_count("synth_test_samples_per_class", &DatasetSpec::synth_test_samples_per_class);
    ds_count("synth_dim", &DatasetSpec::synth_dim);
    ds_count("train_limit", &DatasetSpec::train_limit);
    ds_count("test_limit", &DatasetSpec::test_limit);
    t["synth_spread"] = [](RunConfig& c, const json& v, const std::string&) {
      c.dataset.synth_spread = as<double>(v, "synth_spread");
    };
    t["synth_seed"] = [](RunConfig& c, const json& v, const std::string&) {
      c.dataset.synth_seed = as<std::uint64_t>(v, "synth_seed");
    };
    auto ds_path = [&t](const char* key, std::string DatasetSpec::*field) {
      t[key] = [key, field](RunConfig& c, const json& v, const std::string& base) {
        c.dataset.*field = resolve(as<std::string>(v, key), base);
      };
    };
    ds_path("train_images", &DatasetSpec::train_images);
    ds_path("train_labels", &DatasetSpec::train_labels);
    ds_path("test_images", &DatasetSpec::test_images);
    ds_path("test_labels", &DatasetSpec::test_labels);

    t["out"] = [](RunConfig& c, const json& v, const std::string&) { c.out = as<std::string>(v, "out"); };
    t["seeds"] = [](RunConfig& c, const json& v, const std::string&) {
      if (v.is_number_integer()) {
        c.seeds = {v.get<std::uint64_t>()};
      } else if (v.is_string()) {
        c.seeds.clear();
        std::stringstream ss(v.get<std::string>());
        std::string item;
        while (std::getline(ss, item, ',')) {
          try {
            c.seeds.push_back(std::stoull(item));
          } catch (const std::exception&) {
            throw ConfigError("bad seed '" + item + "'");
          }
        }
      } else {
        c.seeds = as<std::vector<std::uint64_t>>(v, "seeds");
      }
      if (c.seeds.empty()) throw ConfigError("at least one seed is required");
    };
    return t;
  }();
  return table;
}

void set_key(RunConfig& config, const std::string& key, const json& value,
             const std::string& base_dir) {
  const auto& table = setters();
  auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(config, value, base_dir);
}

}  // namespace

RunConfig parse_run_config(std::string_view json_text, const std::string& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig config;
  // "family" first so that an explicit freeze_after_round wins over PT's default.
  if (doc.contains("family")) set_key(config, "family", doc["family"], base_dir);
  for (const auto& [key, value] : doc.items()) {
    if (key == "family") continue;
    set_key(config, key, value, base_dir);
  }
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const auto dir = fs::path(path).parent_path().string();
  return parse_run_config(buf.str(), dir.empty() ? "." : dir);
}

void apply_override(RunConfig& config, const std::string& key, const std::string& value) {
  json v = json::parse(value, nullptr, /*allow_exceptions=*/false);
  if (v.is_discarded()) v = value;
  set_key(config, key, v, "");
}

}  // namespace hetfl::cli
