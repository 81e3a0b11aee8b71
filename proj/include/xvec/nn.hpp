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
#include <vector>

#include "xvec/matrix.hpp"

namespace xvec::nn {

enum class Mode { kTrain, kInfer };

inline constexpr double kLeakySlope = 0.01;
inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.99;

// Row offsets of each utterance inside a stacked frame matrix:
// utterance b owns rows [offsets[b], offsets[b + 1]).
using Segments = std::vector<std::size_t>;

Segments single_segment(std::size_t rows);

struct AffineParams {
  Matrix weight;  // dout x din
  Matrix bias;    // 1 x dout

  AffineParams() = default;
  AffineParams(std::size_t din, std::size_t dout) : weight(dout, din), bias(1, dout) {}
  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }
};

struct BatchNormState {
  Matrix gamma;
  Matrix beta;
  Matrix running_mean;
  Matrix running_var;
  double momentum = kBatchNormMomentum;
  double epsilon = kBatchNormEpsilon;

  BatchNormState() = default;
  // gamma = 1, beta = 0, running mean 0 and running variance 1.
  explicit BatchNormState(std::size_t dim);
  std::size_t dim() const { return gamma.cols(); }
};

struct SpliceContext {
  std::vector<int> offsets;

  // Throws ConfigError unless non-empty, strictly increasing and containing 0.
  void validate() const;
  std::size_t size() const { return offsets.size(); }
};

// Stateless forward primitives.
Matrix affine_forward(const Matrix& x, const AffineParams& p);
Matrix leaky_relu(const Matrix& x, double slope = kLeakySlope);
// In train mode normalizes with the (biased) batch statistics and folds
// them into the running statistics; infer mode reads the running ones.
Matrix batchnorm_forward(const Matrix& x, BatchNormState& s, Mode mode);
// Edge frames are replicated, so row count is preserved.
Matrix splice(const Matrix& x, const SpliceContext& ctx);
Matrix splice(const Matrix& x, const SpliceContext& ctx, const Segments& segments);
Matrix softmax_rows(const Matrix& x);
double cross_entropy(const Matrix& posteriors, std::span<const std::size_t> labels);

// Non-owning view of a trainable tensor and its gradient accumulator.
struct ParamRef {
  std::string name;
  Matrix* value;
  Matrix* grad;
};

class Affine {
 public:
  Affine() = default;
  Affine(std::size_t din, std::size_t dout);

  Matrix forward(const Matrix& x);
  // Returns dL/dx and accumulates into the parameter gradients.
  Matrix backward(const Matrix& dy);

  AffineParams& params() { return params_; }
  const AffineParams& params() const { return params_; }
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
  void zero_grad();

 private:
  AffineParams params_;
  Matrix grad_weight_;
  Matrix grad_bias_;
  std::optional<Matrix> input_;
};

class LeakyRelu {
 public:
  explicit LeakyRelu(double slope = kLeakySlope) : slope_(slope) {}
  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& dy) const;
  double slope() const { return slope_; }
  // Appends which inputs of the latest forward pass were negative.
  void append_signs(std::vector<bool>& out) const;

 private:
  double slope_;
  std::optional<Matrix> input_;
};

class BatchNorm {
 public:
  BatchNorm() = default;
  explicit BatchNorm(std::size_t dim) : state_(dim), grad_gamma_(1, dim), grad_beta_(1, dim) {}

  Matrix forward(const Matrix& x, Mode mode);
  Matrix backward(const Matrix& dy);

  BatchNormState& state() { return state_; }
  const BatchNormState& state() const { return state_; }
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
  // Running statistics, which are persisted but not trained.
  void collect_buffers(const std::string& prefix, std::vector<ParamRef>& out);
  void zero_grad();

 private:
  struct Cache {
    Matrix normalized;
    std::vector<double> inv_std;
    Mode mode;
  };
  BatchNormState state_;
  Matrix grad_gamma_;
  Matrix grad_beta_;
  std::optional<Cache> cache_;
};

class Splice {
 public:
  Splice() = default;
  explicit Splice(SpliceContext ctx);

  Matrix forward(const Matrix& x, const Segments& segments);
  Matrix forward(const Matrix& x) { return forward(x, single_segment(x.rows())); }
  // Scatter-adds each spliced block back onto the frame it was copied from.
  Matrix backward(const Matrix& dy) const;
  const SpliceContext& context() const { return ctx_; }

 private:
  SpliceContext ctx_;
  std::optional<std::vector<std::size_t>> sources_;  // rows * |ctx| source rows
  std::size_t in_cols_ = 0;
};

class Softmax {
 public:
  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& dy) const;

 private:
  std::optional<Matrix> output_;
};

class CrossEntropy {
 public:
  double forward(const Matrix& posteriors, std::span<const std::size_t> labels);
  // Gradient of the mean loss w.r.t. the posteriors (zero where clamped).
  Matrix backward() const;

 private:
  std::optional<Matrix> posteriors_;
  std::vector<std::size_t> labels_;
};

// Gradient of mean cross entropy w.r.t. the logits that produced
// `posteriors` through softmax_rows: (P - onehot) / N.
Matrix softmax_cross_entropy_grad(const Matrix& posteriors, std::span<const std::size_t> labels);

}  // namespace xvec::nn
