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

#include "hetfl/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "hetfl/error.hpp"

namespace hetfl::data {

namespace {

constexpr std::uint32_t kLabelMagic = 0x00000801;
constexpr std::uint32_t kImageMagic = 0x00000803;

// gzread passes uncompressed files through unchanged.
std::vector<std::uint8_t> read_maybe_gzip(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (f == nullptr) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  int n = 0;
  while ((n = gzread(f, buf, sizeof buf)) > 0) out.insert(out.end(), buf, buf + n);
  const bool failed = n < 0;
  gzclose(f);
  if (failed) throw FormatError("corrupt compressed stream in " + path);
  return out;
}

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t at,
                        const char* what) {
  if (bytes.size() < at + 4) {
    throw FormatError(std::string("truncated IDX header in ") + what);
  }
  return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) |
         (std::uint32_t{bytes[at + 2]} << 8) | std::uint32_t{bytes[at + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace

void Dataset::validate() const {
  if (inputs.size() != labels.size() * num_features) {
    throw InvalidArgument("dataset rows and labels differ in length");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw InvalidArgument("label " + std::to_string(y) + " outside [0, " +
                            std::to_string(num_classes) + ")");
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.num_features = num_features;
  out.num_classes = num_classes;
  out.inputs.reserve(indices.size() * num_features);
  out.labels.reserve(indices.size());
  for (auto i : indices) {
    if (i >= size()) throw InvalidArgument("subset index out of range");
    auto r = row(i);
    out.inputs.insert(out.inputs.end(), r.begin(), r.end());
    out.labels.push_back(labels[i]);
  }
  return out;
}

Dataset decode_idx(std::span<const std::uint8_t> images,
                   std::span<const std::uint8_t> labels,
                   std::size_t num_classes) {
  if (read_be32(images, 0, "images") != kImageMagic) {
    throw FormatError("images file: bad IDX magic (expected 0x00000803)");
  }
  if (read_be32(labels, 0, "labels") != kLabelMagic) {
    throw FormatError("labels file: bad IDX magic (expected 0x00000801)");
  }
  const std::size_t count = read_be32(images, 4, "images");
  const std::size_t rows = read_be32(images, 8, "images");
  const std::size_t cols = read_be32(images, 12, "images");
  const std::size_t label_count = read_be32(labels, 4, "labels");
  if (count != label_count) {
    throw FormatError("images file holds " + std::to_string(count) +
                      " samples but labels file holds " +
                      std::to_string(label_count));
  }
  const std::size_t features = rows * cols;
  if (images.size() < 16 + count * features) throw FormatError("truncated images file");
  if (labels.size() < 8 + count) throw FormatError("truncated labels file");

  Dataset ds;
  ds.num_features = features;
  ds.inputs.resize(count * features);
  for (std::size_t k = 0; k < count * features; ++k) {
    ds.inputs[k] = static_cast<double>(images[16 + k]) / 255.0;
  }
  ds.labels.resize(count);
  int max_label = -1;
  for (std::size_t k = 0; k < count; ++k) {
    ds.labels[k] = labels[8 + k];
    max_label = std::max(max_label, ds.labels[k]);
  }
  ds.num_classes = num_classes != 0 ? num_classes : static_cast<std::size_t>(max_label + 1);
  ds.validate();
  return ds;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::size_t num_classes) {
  const auto images = read_maybe_gzip(images_path);
  const auto labels = read_maybe_gzip(labels_path);
  return decode_idx(images, labels, num_classes);
}

IdxBytes encode_idx(const Dataset& dataset, std::size_t rows, std::size_t cols) {
  if (rows * cols != dataset.num_features) {
    throw InvalidArgument("encode_idx: rows * cols must equal the feature count");
  }
  IdxBytes out;
  put_be32(out.images, kImageMagic);
  put_be32(out.images, static_cast<std::uint32_t>(dataset.size()));
  put_be32(out.images, static_cast<std::uint32_t>(rows));
  put_be32(out.images, static_cast<std::uint32_t>(cols));
  for (double x : dataset.inputs) {
    const double scaled = std::round(std::clamp(x, 0.0, 1.0) * 255.0);
    out.images.push_back(static_cast<std::uint8_t>(scaled));
  }
  put_be32(out.labels, kLabelMagic);
  put_be32(out.labels, static_cast<std::uint32_t>(dataset.size()));
  for (int y : dataset.labels) {
    if (y < 0 || y > 255) throw InvalidArgument("encode_idx: label does not fit a byte");
    out.labels.push_back(static_cast<std::uint8_t>(y));
  }
  return out;
}

void write_idx(const Dataset& dataset, std::size_t rows, std::size_t cols,
               const std::string& images_path, const std::string& labels_path) {
  const auto bytes = encode_idx(dataset, rows, cols);
  write_file(images_path, bytes.images);
  write_file(labels_path, bytes.labels);
}

Dataset synth_blobs(std::size_t num_classes, std::size_t samples_per_class,
                    std::size_t dim, double spread, std::uint64_t seed) {
  if (dim < num_classes) throw InvalidArgument("synth_blobs: dim must be >= num_classes");
  if (spread < 0.0) throw InvalidArgument("synth_blobs: spread must be non-negative");
  Dataset ds;
  ds.num_features = dim;
  ds.num_classes = num_classes;
  ds.inputs.reserve(num_classes * samples_per_class * dim);
  ds.labels.reserve(num_classes * samples_per_class);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t s = 0; s < samples_per_class; ++s) {
      for (std::size_t d = 0; d < dim; ++d) {
        const double center = d == c ? 3.0 : 0.0;
        ds.inputs.push_back(center + spread * noise(rng));
      }
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  return ds;
}

namespace {

Shards iid_partition(std::size_t n, const PartitionSpec& spec) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);

  Shards shards(spec.num_clients);
  const std::size_t base = n / spec.num_clients;
  const std::size_t extra = n % spec.num_clients;
  std::size_t at = 0;
  for (std::size_t c = 0; c < spec.num_clients; ++c) {
    const std::size_t len = base + (c < extra ? 1 : 0);
    shards[c].assign(order.begin() + static_cast<std::ptrdiff_t>(at),
                     order.begin() + static_cast<std::ptrdiff_t>(at + len));
    at += len;
  }
  return shards;
}

// Slot s of client c is position c * k + s. Classes are laid out cyclically
// over the N * k slots, shuffled, then repaired so that no client holds the
// same class twice.
std::vector<std::size_t> assign_slot_classes(const PartitionSpec& spec,
                                             std::size_t num_classes) {
  const std::size_t k = spec.classes_per_client;
  const std::size_t slots = spec.num_clients * k;
  std::vector<std::size_t> cls(slots);
  for (std::size_t s = 0; s < slots; ++s) cls[s] = s % num_classes;
  std::mt19937_64 rng(spec.seed);
  std::shuffle(cls.begin(), cls.end(), rng);

  auto owner = [k](std::size_t s) { return s / k; };
  auto holds = [&](std::size_t client, std::size_t c, std::size_t skip) {
    for (std::size_t s = client * k; s < client * k + k; ++s) {
      if (s != skip && cls[s] == c) return true;
    }
    return false;
  };
  for (std::size_t s = 0; s < slots; ++s) {
    const std::size_t me = owner(s);
    if (!holds(me, cls[s], s)) continue;
    bool fixed = false;
    for (std::size_t t = 0; t < slots && !fixed; ++t) {
      const std::size_t other = owner(t);
      if (other == me) continue;
      // Swap is valid when neither client ends up with a duplicate.
      if (!holds(me, cls[t], s) && !holds(other, cls[s], t)) {
        std::swap(cls[s], cls[t]);
        fixed = true;
      }
    }
    if (!fixed) throw InvalidArgument("label-skew partition: cannot give every "
                                      "client distinct classes");
  }
  return cls;
}

Shards label_skew_partition(const Dataset& dataset, const PartitionSpec& spec) {
  const std::size_t k = spec.classes_per_client;
  const std::size_t num_classes = dataset.num_classes;
  if (k == 0 || k > num_classes) {
    throw InvalidArgument("classes_per_client must lie in [1, num_classes]");
  }
  if (spec.num_clients * k < num_classes) {
    throw InvalidArgument("label-skew partition: num_clients * classes_per_client "
                          "must be at least num_classes to cover every sample");
  }
  const auto slot_class = assign_slot_classes(spec, num_classes);

  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    by_class[static_cast<std::size_t>(dataset.labels[i])].push_back(i);
  }
  std::vector<std::vector<std::size_t>> class_slots(num_classes);
  for (std::size_t s = 0; s < slot_class.size(); ++s) {
    class_slots[slot_class[s]].push_back(s);
  }

  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  Shards shards(spec.num_clients);
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& members = by_class[c];
    const auto& owners = class_slots[c];
    if (members.size() < owners.size()) {
      throw InvalidArgument("label-skew partition: class " + std::to_string(c) +
                            " has " + std::to_string(members.size()) +
                            " samples for " + std::to_string(owners.size()) +
                            " shards");
    }
    std::shuffle(members.begin(), members.end(), rng);
    const std::size_t base = members.size() / owners.size();
    const std::size_t extra = members.size() % owners.size();
    std::size_t at = 0;
    for (std::size_t j = 0; j < owners.size(); ++j) {
      const std::size_t len = base + (j < extra ? 1 : 0);
      auto& dst = shards[owners[j] / k];
      dst.insert(dst.end(), members.begin() + static_cast<std::ptrdiff_t>(at),
                 members.begin() + static_cast<std::ptrdiff_t>(at + len));
      at += len;
    }
  }
  for (auto& shard : shards) std::sort(shard.begin(), shard.end());
  return shards;
}

}  // namespace

Shards partition(const Dataset& dataset, const PartitionSpec& spec) {
  if (spec.num_clients == 0) throw InvalidArgument("partition: no clients");
  if (dataset.size() < spec.num_clients) {
    throw InvalidArgument("partition: fewer samples than clients");
  }
  switch (spec.mode) {
    case PartitionMode::kIid:
      return iid_partition(dataset.size(), spec);
    case PartitionMode::kLabelSkew:
      return label_skew_partition(dataset, spec);
  }
  throw InvalidArgument("partition: unknown mode");
}

}  // namespace hetfl::data
