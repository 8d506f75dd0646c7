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

#include <algorithm>
#include <filesystem>
#include <set>

#include "hetfl/data.hpp"
#include "hetfl/error.hpp"

using namespace hetfl;
using namespace hetfl::data;

namespace {

std::vector<std::uint8_t> be32(std::uint32_t v) {
  return {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
          static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
}

std::vector<std::uint8_t> cat(std::initializer_list<std::vector<std::uint8_t>> parts) {
  std::vector<std::uint8_t> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

// Two 2x2 images, all-black then all-white, labelled 3 and 7.
const auto kImages = cat({be32(0x803), be32(2), be32(2), be32(2), {0, 0, 0, 0, 255, 255, 255, 255}});
const auto kLabels = cat({be32(0x801), be32(2), {3, 7}});

void check_partition(const Shards& shards, std::size_t n) {
  std::vector<std::size_t> all;
  for (const auto& s : shards) all.insert(all.end(), s.begin(), s.end());
  std::sort(all.begin(), all.end());
  REQUIRE(all.size() == n);
  for (std::size_t i = 0; i < n; ++i) CHECK(all[i] == i);
}

}  // namespace

TEST_CASE("IDX decoding of a hand-built fixture") {
  const auto ds = decode_idx(kImages, kLabels);
  CHECK(ds.size() == 2);
  CHECK(ds.num_features == 4);
  CHECK(ds.num_classes == 8);
  CHECK(ds.inputs == std::vector<double>{0, 0, 0, 0, 1, 1, 1, 1});
  CHECK(ds.labels == std::vector<int>{3, 7});
  CHECK(decode_idx(kImages, kLabels, 10).num_classes == 10);
}

TEST_CASE("IDX errors") {
  const auto swapped = cat({be32(0x801), be32(2), be32(2), be32(2), {0, 0, 0, 0, 255, 255, 255, 255}});
  CHECK_THROWS_AS(decode_idx(swapped, kLabels), FormatError);
  CHECK_THROWS_AS(decode_idx(kImages, kImages), FormatError);
  auto truncated = kImages;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_idx(truncated, kLabels), FormatError);
  const auto one_label = cat({be32(0x801), be32(1), {3}});
  CHECK_THROWS_AS(decode_idx(kImages, one_label), FormatError);
  CHECK_THROWS_AS(decode_idx(kImages, kLabels, 5), Error);
  CHECK_THROWS_AS(load_idx("/nonexistent/a.gz", "/nonexistent/b.gz"), Error);
}

TEST_CASE("IDX round trip through files") {
  const auto ds = decode_idx(kImages, kLabels);
  const auto bytes = encode_idx(ds, 2, 2);
  CHECK(bytes.images == kImages);
  CHECK(bytes.labels == kLabels);
  const auto dir = std::filesystem::temp_directory_path() / "hetfl_test_idx";
  std::filesystem::create_directories(dir);
  write_idx(ds, 2, 2, (dir / "img").string(), (dir / "lbl").string());
  const auto back = load_idx((dir / "img").string(), (dir / "lbl").string());
  CHECK(back.inputs == ds.inputs);
  CHECK(back.labels == ds.labels);
  std::filesystem::remove_all(dir);
}

TEST_CASE("bundled gzip MNIST subset") {
  const std::string dir = HETFL_SOURCE_DIR "/data/mnist_subset/";
  const auto train = load_idx(dir + "train-images-idx3-ubyte.gz", dir + "train-labels-idx1-ubyte.gz");
  CHECK(train.size() == 2000);
  CHECK(train.num_features == 784);
  CHECK(train.num_classes == 10);
  CHECK(*std::max_element(train.inputs.begin(), train.inputs.end()) <= 1.0);
}

TEST_CASE("synthetic blobs") {
  const auto a = synth_blobs(10, 100, 20, 0.3, 4);
  CHECK(a.size() == 1000);
  CHECK(a.num_features == 20);
  CHECK(a.inputs == synth_blobs(10, 100, 20, 0.3, 4).inputs);
  CHECK(a.inputs != synth_blobs(10, 100, 20, 0.3, 5).inputs);

  const auto exact = synth_blobs(4, 5, 6, 0.0, 1);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < exact.size(); ++i) {
    const auto r = exact.row(i);
    for (std::size_t j = 0; j < 6; ++j) CHECK(r[j] == (static_cast<int>(j) == exact.labels[i] ? 3.0 : 0.0));
    const auto best = std::max_element(r.begin(), r.begin() + 4) - r.begin();
    correct += best == exact.labels[i] ? 1 : 0;
  }
  CHECK(correct == exact.size());
  CHECK_THROWS(synth_blobs(5, 3, 4, 0.1, 0));
}

TEST_CASE("IID partition") {
  const auto ds = synth_blobs(10, 10, 10, 0.3, 0);
  const auto shards = partition(ds, {PartitionMode::kIid, 10, 2, 3});
  REQUIRE(shards.size() == 10);
  for (const auto& s : shards) CHECK(s.size() == 10);
  check_partition(shards, 100);
  CHECK(shards == partition(ds, {PartitionMode::kIid, 10, 2, 3}));
  const auto uneven = partition(ds, {PartitionMode::kIid, 7, 2, 3});
  for (const auto& s : uneven) CHECK((s.size() == 14 || s.size() == 15));
  check_partition(uneven, 100);
}

TEST_CASE("label-skew partition") {
  const auto train = synth_blobs(10, 60, 10, 0.3, 0);
  const auto test = synth_blobs(10, 20, 10, 0.3, 1);
  const PartitionSpec spec{PartitionMode::kLabelSkew, 30, 2, 11};
  const auto tr = partition(train, spec);
  const auto te = partition(test, spec);
  REQUIRE(tr.size() == 30);
  check_partition(tr, train.size());
  check_partition(te, test.size());
  for (std::size_t c = 0; c < 30; ++c) {
    std::set<int> a, b;
    for (auto i : tr[c]) a.insert(train.labels[i]);
    for (auto i : te[c]) b.insert(test.labels[i]);
    CHECK(a.size() == 2);
    CHECK(a == b);
  }
  CHECK_THROWS(partition(train, {PartitionMode::kLabelSkew, 2, 2, 0}));
}
