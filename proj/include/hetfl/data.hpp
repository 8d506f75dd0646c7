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

#ifndef HETFL_DATA_HPP_
#define HETFL_DATA_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hetfl::data {

// Row-major sample matrix with features in [0, 1] and integer class labels.
struct Dataset {
  std::size_t num_features = 0;
  std::size_t num_classes = 0;
  std::vector<double> inputs;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return {inputs.data() + i * num_features, num_features};
  }

  // Throws InvalidArgument when rows and labels disagree or a label is out
  // of range.
  void validate() const;

  // Copy of the listed rows, in the listed order.
  Dataset subset(std::span<const std::size_t> indices) const;
};

enum class PartitionMode { kIid, kLabelSkew };

struct PartitionSpec {
  PartitionMode mode = PartitionMode::kIid;
  std::size_t num_clients = 1;
  std::size_t classes_per_client = 2;
  std::uint64_t seed = 0;
};

using Shards = std::vector<std::vector<std::size_t>>;

// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
// Either file may be gzip-compressed. Pixels are scaled by 1/255 and each
// image is flattened row-major. `num_classes` of the result is
// max(label) + 1 unless `num_classes` is given.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::size_t num_classes = 0);

// Raw IDX payloads. Inputs are mapped back to bytes with round(255 * x),
// so datasets produced by load_idx round-trip exactly.
struct IdxBytes {
  std::vector<std::uint8_t> images;
  std::vector<std::uint8_t> labels;
};
IdxBytes encode_idx(const Dataset& dataset, std::size_t rows, std::size_t cols);
Dataset decode_idx(std::span<const std::uint8_t> images,
                   std::span<const std::uint8_t> labels,
                   std::size_t num_classes = 0);
void write_idx(const Dataset& dataset, std::size_t rows, std::size_t cols,
               const std::string& images_path, const std::string& labels_path);

// Gaussian blobs: class c is centred at 3 * e_c in R^dim with isotropic noise
// of standard deviation `spread`. Samples are emitted class by class.
Dataset synth_blobs(std::size_t num_classes, std::size_t samples_per_class,
                    std::size_t dim, double spread, std::uint64_t seed);

// Splits sample indices across clients. IID: seed-shuffled shards whose sizes
// differ by at most one. LabelSkew: every client receives
// `classes_per_client` single-class shards with distinct labels; the
// shard-to-class assignment depends only on (num_clients,
// classes_per_client, num_classes, seed), so partitioning a train and a test
// split with the same spec gives each client the same label set on both.
Shards partition(const Dataset& dataset, const PartitionSpec& spec);

}  // namespace hetfl::data

#endif  // HETFL_DATA_HPP_
