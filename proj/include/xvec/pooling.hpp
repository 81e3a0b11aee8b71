// Copyright (c) 2026 The xvec Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xvec/matrix.hpp"
#include "xvec/nn.hpp"

namespace xvec::pooling {

// Added to the weighted variance before the square root so that the
// standard deviation (and its gradient) stays finite on constant input.
inline constexpr double kVarianceFloor = 1e-10;

// Weighted mean followed by weighted standard deviation, 2 * d_v entries.
struct PoolingOutput {
  std::vector<double> data;

  std::size_t value_dim() const { return data.size() / 2; }
  std::span<const double> mean() const { return {data.data(), value_dim()}; }
  std::span<const double> stddev() const { return {data.data() + value_dim(), value_dim()}; }
};

// Per-head, per-frame attention weights (heads x T).
struct AttentionRecord {
  Matrix weights;

  std::size_t heads() const { return weights.rows(); }
  std::size_t frames() const { return weights.cols(); }
  // Largest weight over heads at every frame.
  std::vector<double> max_over_heads() const;
};

// Feed-forward network mapping keys into the query space. Every block is
// affine -> leaky ReLU -> batch norm.
class CompatibilityNet {
 public:
  CompatibilityNet() = default;
  // widths lists the hidden sizes; the last entry is the query dimension.
  CompatibilityNet(std::size_t key_dim, const std::vector<std::size_t>& widths);

  Matrix forward(const Matrix& keys, nn::Mode mode);
  Matrix backward(const Matrix& grad_out);

  std::size_t in_dim() const { return key_dim_; }
  std::size_t out_dim() const;
  std::size_t depth() const { return blocks_.size(); }

  struct Block {
    nn::Affine affine;
    nn::LeakyRelu relu;
    nn::BatchNorm norm;
  };
  std::vector<Block>& blocks() { return blocks_; }
  const std::vector<Block>& blocks() const { return blocks_; }

  void collect(const std::string& prefix, std::vector<nn::ParamRef>& out);
  void collect_buffers(const std::string& prefix, std::vector<nn::ParamRef>& out);
  void zero_grad();

 private:
  std::size_t key_dim_ = 0;
  std::vector<Block> blocks_;
};

struct AttentionInputs {
  Matrix values;              // T x d_v
  Matrix keys;                // T x d_k
  std::vector<double> query;  // d_q
};

// Softmax over a vector, with max subtraction.
std::vector<double> softmax(std::span<const double> logits);
// Vector-Jacobian product of softmax given its output.
std::vector<double> softmax_backward(std::span<const double> probs, std::span<const double> grad);

// Weighted mean and standard deviation of the rows of `values`.
PoolingOutput weighted_stats(const Matrix& values, std::span<const double> weights);

struct WeightedStatsGrad {
  Matrix values;                // dL/dv_t
  std::vector<double> weights;  // dL/dalpha_t, treating the weights as free
};
WeightedStatsGrad weighted_stats_backward(const Matrix& values, std::span<const double> weights,
                                          const PoolingOutput& output,
                                          std::span<const double> grad_output);

PoolingOutput stats_pool(const Matrix& values);

std::vector<double> attention_logits(const Matrix& keys, CompatibilityNet& net,
                                     std::span<const double> query, nn::Mode mode);

std::pair<PoolingOutput, AttentionRecord> attention_pool(const Matrix& values,
                                                         std::span<const double> logits);

std::pair<PoolingOutput, AttentionRecord> multihead_pool(const AttentionInputs& inputs,
                                                         CompatibilityNet& net, std::size_t heads,
                                                         nn::Mode mode);

// Throws ConfigError when `heads` does not split both dimensions evenly.
void check_head_split(std::size_t value_dim, std::size_t query_dim, std::size_t heads);

// Statistics pooling over each segment of a stacked frame matrix.
class StatsPooling {
 public:
  // Returns B x 2*d_v.
  Matrix forward(const Matrix& values, const nn::Segments& segments);
  Matrix backward(const Matrix& grad_pooled) const;

 private:
  struct Cache {
    Matrix values;
    nn::Segments segments;
    std::vector<PoolingOutput> outputs;
  };
  std::optional<Cache> cache_;
};

// Multi-head attentive statistics pooling (heads = 1 is single-head
// attention). Keys pass once through the compatibility network; its output,
// the query and the values are then split into `heads` contiguous blocks.
class AttentionPooling {
 public:
  AttentionPooling() = default;
  AttentionPooling(std::size_t key_dim, std::size_t value_dim,
                   const std::vector<std::size_t>& compat_widths, std::size_t heads);

  // values and keys are stacked over the batch with the same segments.
  Matrix forward(const Matrix& values, const Matrix& keys, const nn::Segments& segments,
                 nn::Mode mode);

  struct Grads {
    Matrix values;
    Matrix keys;
  };
  Grads backward(const Matrix& grad_pooled);

  // One record per segment from the latest forward pass.
  const std::vector<AttentionRecord>& records() const { return records_; }

  CompatibilityNet& net() { return net_; }
  const CompatibilityNet& net() const { return net_; }
  Matrix& query() { return query_; }
  const Matrix& query() const { return query_; }
  std::size_t heads() const { return heads_; }
  std::size_t value_dim() const { return value_dim_; }

  void collect_compat(const std::string& prefix, std::vector<nn::ParamRef>& out);
  void collect_query(const std::string& name, std::vector<nn::ParamRef>& out);
  void collect_buffers(const std::string& prefix, std::vector<nn::ParamRef>& out);
  void zero_grad();

 private:
  struct Cache {
    Matrix values;
    Matrix projected;  // compatibility network output
    nn::Segments segments;
    std::vector<std::vector<PoolingOutput>> head_outputs;  // [segment][head]
  };

  CompatibilityNet net_;
  Matrix query_;
  Matrix grad_query_;
  std::size_t heads_ = 1;
  std::size_t value_dim_ = 0;
  std::vector<AttentionRecord> records_;
  std::optional<Cache> cache_;
};

}  // namespace xvec::pooling
