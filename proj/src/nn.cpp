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

#include "hetfl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "hetfl/error.hpp"

namespace hetfl::nn {

namespace {

using ConstWeightMap = Eigen::Map<const Matrix>;
using ConstBiasMap = Eigen::Map<const Eigen::RowVectorXd>;
using WeightMap = Eigen::Map<Matrix>;
using BiasMap = Eigen::Map<Eigen::RowVectorXd>;

ConstWeightMap weights_of(const std::vector<double>& v, const LayerSpan& s) {
  return ConstWeightMap(v.data() + s.weight_start,
                        static_cast<Eigen::Index>(s.out),
                        static_cast<Eigen::Index>(s.in));
}

ConstBiasMap bias_of(const std::vector<double>& v, const LayerSpan& s) {
  return ConstBiasMap(v.data() + s.bias_start, static_cast<Eigen::Index>(s.out));
}

void check_batch(const ParamVector& params, const Batch& batch) {
  const auto& layout = params.layout;
  if (static_cast<std::size_t>(batch.inputs.cols()) != layout.input_dim()) {
    throw ShapeError("batch has " + std::to_string(batch.inputs.cols()) +
                     " features, layout expects " +
                     std::to_string(layout.input_dim()));
  }
  if (static_cast<std::size_t>(batch.inputs.rows()) != batch.labels.size()) {
    throw ShapeError("batch inputs and labels differ in length");
  }
  for (int y : batch.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= layout.num_classes()) {
      throw ShapeError("label " + std::to_string(y) + " out of range");
    }
  }
  if (params.values.size() != layout.total()) {
    throw ShapeError("parameter vector does not match its layout");
  }
}

// Pre-activations of every layer; activations are relu(z) except the last.
std::vector<Matrix> forward_all(const ParamVector& params, const Batch& batch) {
  const auto& layers = params.layout.layers();
  std::vector<Matrix> z;
  z.reserve(layers.size());
  Matrix a = batch.inputs;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix zl = a * weights_of(params.values, layers[l]).transpose();
    zl.rowwise() += bias_of(params.values, layers[l]);
    if (l + 1 < layers.size()) a = zl.cwiseMax(0.0);
    z.push_back(std::move(zl));
  }
  return z;
}

// Row-wise log-softmax, shifted by the row maximum.
Matrix log_softmax(const Matrix& logits) {
  Matrix out = logits;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    const double lse = m + std::log((out.row(r).array() - m).exp().sum());
    out.row(r).array() -= lse;
  }
  return out;
}

int argmax_lowest(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  int best = 0;
  for (Eigen::Index c = 1; c < row.size(); ++c) {
    if (row[c] > row[best]) best = static_cast<int>(c);
  }
  return best;
}

}  // namespace

LayerLayout::LayerLayout(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) {
    throw InvalidArgument("a layout needs at least an input and an output layer");
  }
  for (auto s : sizes_) {
    if (s == 0) throw InvalidArgument("layer sizes must be positive");
  }
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    LayerSpan s;
    s.in = sizes_[l];
    s.out = sizes_[l + 1];
    s.weight_start = offset;
    s.weight_len = s.in * s.out;
    s.bias_start = offset + s.weight_len;
    s.bias_len = s.out;
    offset = s.bias_start + s.bias_len;
    weight_count_ += s.weight_len;
    spans_.push_back(s);
  }
  total_ = offset;
}

bool LayerLayout::is_weight(std::size_t index) const {
  for (const auto& s : spans_) {
    if (index >= s.weight_start && index < s.weight_start + s.weight_len) return true;
  }
  return false;
}

ParamVector::ParamVector(LayerLayout l, std::vector<double> v)
    : layout(std::move(l)), values(std::move(v)) {
  if (values.size() != layout.total()) {
    throw ShapeError("parameter vector length " + std::to_string(values.size()) +
                     " does not match layout total " +
                     std::to_string(layout.total()));
  }
}

bool ParamVector::all_finite() const {
  return std::all_of(values.begin(), values.end(),
                     [](double x) { return std::isfinite(x); });
}

Batch make_batch(const data::Dataset& dataset,
                 std::span<const std::size_t> indices) {
  Batch batch;
  batch.inputs.resize(static_cast<Eigen::Index>(indices.size()),
                      static_cast<Eigen::Index>(dataset.num_features));
  batch.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto i = indices[r];
    if (i >= dataset.size()) throw ShapeError("sample index out of range");
    auto row = dataset.row(i);
    std::copy(row.begin(), row.end(),
              batch.inputs.data() + r * dataset.num_features);
    batch.labels.push_back(dataset.labels[i]);
  }
  return batch;
}

ParamVector init_params(const LayerLayout& layout, std::uint64_t seed) {
  ParamVector params(layout);
  std::mt19937_64 rng(seed);
  for (const auto& s : layout.layers()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(s.in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t k = 0; k < s.weight_len; ++k) {
      params.values[s.weight_start + k] = dist(rng);
    }
  }
  return params;
}

Matrix forward(const ParamVector& params, const Batch& batch) {
  check_batch(params, batch);
  return forward_all(params, batch).back();
}

LossAndGrad loss_and_grad(const ParamVector& params, const Batch& batch) {
  check_batch(params, batch);
  if (batch.size() == 0) throw InvalidArgument("empty batch");

  const auto& layers = params.layout.layers();
  const auto z = forward_all(params, batch);
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  const Matrix logp = log_softmax(z.back());
  LossAndGrad out;
  out.grad.assign(params.size(), 0.0);
  for (std::size_t r = 0; r < batch.size(); ++r) {
    out.loss -= logp(static_cast<Eigen::Index>(r), batch.labels[r]);
  }
  out.loss *= inv_b;

  // dL/dz for the output layer: (softmax - onehot) / B.
  Matrix delta = logp.array().exp();
  for (std::size_t r = 0; r < batch.size(); ++r) {
    delta(static_cast<Eigen::Index>(r), batch.labels[r]) -= 1.0;
  }
  delta *= inv_b;

  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& s = layers[l];
    const Matrix a_prev =
        l == 0 ? batch.inputs : Matrix(z[l - 1].cwiseMax(0.0));
    WeightMap(out.grad.data() + s.weight_start, static_cast<Eigen::Index>(s.out),
              static_cast<Eigen::Index>(s.in)) = delta.transpose() * a_prev;
    BiasMap(out.grad.data() + s.bias_start, static_cast<Eigen::Index>(s.out)) =
        delta.colwise().sum();
    if (l > 0) {
      Matrix upstream = delta * weights_of(params.values, s);
      // ReLU subgradient at 0 is 0.
      delta = (z[l - 1].array() > 0.0).select(upstream, 0.0);
    }
  }
  return out;
}

void masked_sgd_step(ParamVector& params, std::span<const double> grad,
                     const Mask& mask, OptimizerState& opt) {
  const auto n = params.size();
  if (grad.size() != n || mask.size() != n || opt.momentum_buffer.size() != n) {
    throw ShapeError("masked_sgd_step: parameter, gradient, mask and momentum "
                     "buffer lengths differ");
  }
  auto& buf = opt.momentum_buffer;
  auto& theta = params.values;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = mask[i] ? grad[i] : 0.0;
    buf[i] = opt.momentum * buf[i] + g;
    theta[i] -= opt.learning_rate * buf[i];
  }
}

EvalResult evaluate(const ParamVector& params, const Mask& mask,
                    const data::Dataset& dataset, std::size_t test_batch) {
  std::vector<std::size_t> all(dataset.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return evaluate(params, mask, dataset, all, test_batch);
}

EvalResult evaluate(const ParamVector& params, const Mask& mask,
                    const data::Dataset& dataset,
                    std::span<const std::size_t> indices,
                    std::size_t test_batch) {
  if (indices.empty()) throw InvalidArgument("evaluate: empty dataset");
  if (mask.size() != params.size()) throw ShapeError("evaluate: mask length");
  if (test_batch == 0) throw InvalidArgument("evaluate: test batch must be positive");

  ParamVector masked = params;
  for (std::size_t i = 0; i < masked.size(); ++i) {
    if (!mask[i]) masked.values[i] = 0.0;
  }

  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < indices.size(); start += test_batch) {
    const auto len = std::min(test_batch, indices.size() - start);
    const Batch batch = make_batch(dataset, indices.subspan(start, len));
    const Matrix logits = forward(masked, batch);
    const Matrix logp = log_softmax(logits);
    for (std::size_t r = 0; r < len; ++r) {
      const auto row = static_cast<Eigen::Index>(r);
      loss_sum -= logp(row, batch.labels[r]);
      if (argmax_lowest(logits.row(row)) == batch.labels[r]) ++correct;
    }
  }
  const double n = static_cast<double>(indices.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

LossAndGrad full_gradient(const ParamVector& params,
                          const data::Dataset& dataset,
                          std::span<const std::size_t> indices,
                          std::size_t chunk) {
  std::vector<std::size_t> all;
  if (indices.empty()) {
    all.resize(dataset.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    indices = all;
  }
  if (indices.empty()) throw InvalidArgument("full_gradient: empty dataset");
  if (chunk == 0) throw InvalidArgument("full_gradient: chunk must be positive");

  LossAndGrad total;
  total.grad.assign(params.size(), 0.0);
  const double n = static_cast<double>(indices.size());
  for (std::size_t start = 0; start < indices.size(); start += chunk) {
    const auto len = std::min(chunk, indices.size() - start);
    const auto part = loss_and_grad(params, make_batch(dataset, indices.subspan(start, len)));
    const double w = static_cast<double>(len) / n;
    total.loss += w * part.loss;
    for (std::size_t i = 0; i < total.grad.size(); ++i) {
      total.grad[i] += w * part.grad[i];
    }
  }
  return total;
}

}  // namespace hetfl::nn
