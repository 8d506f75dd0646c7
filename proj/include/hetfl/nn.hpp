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

// Multi-layer perceptron over a flat parameter vector: ReLU hidden layers,
// softmax cross-entropy output, hand-written backpropagation and a masked
// SGD-with-momentum update.

#ifndef HETFL_NN_HPP_
#define HETFL_NN_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hetfl/data.hpp"
#include "hetfl/mask.hpp"

namespace hetfl::nn {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Placement of one affine layer inside the flat vector. The weight block is
// an out x in row-major matrix: row j holds the incoming weights of unit j.
struct LayerSpan {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t weight_start = 0;
  std::size_t weight_len = 0;
  std::size_t bias_start = 0;
  std::size_t bias_len = 0;

  bool operator==(const LayerSpan&) const = default;
};

class LayerLayout {
 public:
  // `sizes` lists units per layer, input first, e.g. {784, 200, 10}.
  explicit LayerLayout(std::vector<std::size_t> sizes);

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t num_layers() const { return spans_.size(); }
  const LayerSpan& layer(std::size_t l) const { return spans_.at(l); }
  const std::vector<LayerSpan>& layers() const { return spans_; }

  std::size_t total() const { return total_; }
  std::size_t weight_count() const { return weight_count_; }
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t num_classes() const { return sizes_.back(); }
  bool is_weight(std::size_t index) const;

  bool operator==(const LayerLayout& other) const { return sizes_ == other.sizes_; }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<LayerSpan> spans_;
  std::size_t total_ = 0;
  std::size_t weight_count_ = 0;
};

struct ParamVector {
  LayerLayout layout;
  std::vector<double> values;

  explicit ParamVector(LayerLayout l)
      : layout(std::move(l)), values(layout.total(), 0.0) {}
  ParamVector(LayerLayout l, std::vector<double> v);

  std::size_t size() const { return values.size(); }
  bool all_finite() const;
};

struct Batch {
  Matrix inputs;            // batch x input_dim
  std::vector<int> labels;  // batch

  std::size_t size() const { return labels.size(); }
};

Batch make_batch(const data::Dataset& dataset,
                 std::span<const std::size_t> indices);

struct OptimizerState {
  std::vector<double> momentum_buffer;
  double momentum = 0.0;
  double learning_rate = 0.01;

  OptimizerState(std::size_t n, double lr, double mom)
      : momentum_buffer(n, 0.0), momentum(mom), learning_rate(lr) {}
};

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero.
ParamVector init_params(const LayerLayout& layout, std::uint64_t seed);

// Logits, batch x num_classes.
Matrix forward(const ParamVector& params, const Batch& batch);

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// Mean softmax cross-entropy over the batch and its exact gradient.
LossAndGrad loss_and_grad(const ParamVector& params, const Batch& batch);

// g' = grad * mask; buffer = momentum * buffer + g'; params -= lr * buffer.
void masked_sgd_step(ParamVector& params, std::span<const double> grad,
                     const Mask& mask, OptimizerState& opt);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

inline constexpr std::size_t kDefaultTestBatch = 128;

// Loss and argmax accuracy of params * mask on the dataset (or on the listed
// rows). Ties in the argmax go to the lowest class index.
EvalResult evaluate(const ParamVector& params, const Mask& mask,
                    const data::Dataset& dataset,
                    std::size_t test_batch = kDefaultTestBatch);
EvalResult evaluate(const ParamVector& params, const Mask& mask,
                    const data::Dataset& dataset,
                    std::span<const std::size_t> indices,
                    std::size_t test_batch = kDefaultTestBatch);

// Full-batch gradient of the mean loss over the listed rows (all rows when
// `indices` is empty), accumulated in test_batch chunks.
LossAndGrad full_gradient(const ParamVector& params,
                          const data::Dataset& dataset,
                          std::span<const std::size_t> indices = {},
                          std::size_t chunk = kDefaultTestBatch);

}  // namespace hetfl::nn

#endif  // HETFL_NN_HPP_
