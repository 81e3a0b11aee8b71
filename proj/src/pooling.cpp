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

#include "xvec/pooling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "xvec/error.hpp"

namespace xvec::pooling {
namespace {

struct HeadPass {
  std::vector<PoolingOutput> outputs;
  AttentionRecord record;
  PoolingOutput combined;
};

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Means of all heads first, then standard deviations of all heads.
PoolingOutput interleave_heads(const std::vector<PoolingOutput>& heads, std::size_t value_dim) {
  PoolingOutput out{std::vector<double>(2 * value_dim)};
  const std::size_t sub = value_dim / heads.size();
  for (std::size_t i = 0; i < heads.size(); ++i) {
    std::copy(heads[i].mean().begin(), heads[i].mean().end(), out.data.begin() + i * sub);
    std::copy(heads[i].stddev().begin(), heads[i].stddev().end(),
              out.data.begin() + value_dim + i * sub);
  }
  return out;
}

HeadPass run_heads(const Matrix& values, const Matrix& projected, std::span<const double> query,
                   std::size_t heads) {
  const std::size_t frames = values.rows();
  const std::size_t sub_v = values.cols() / heads;
  const std::size_t sub_q = query.size() / heads;
  HeadPass pass;
  pass.record.weights = Matrix(heads, frames);
  pass.outputs.reserve(heads);
  std::vector<double> logits(frames);
  for (std::size_t i = 0; i < heads; ++i) {
    auto q = query.subspan(i * sub_q, sub_q);
    for (std::size_t t = 0; t < frames; ++t) logits[t] = dot(q, projected.row(t).subspan(i * sub_q, sub_q));
    std::vector<double> alpha = softmax(logits);
    std::copy(alpha.begin(), alpha.end(), pass.record.weights.row(i).begin());
    pass.outputs.push_back(weighted_stats(values.slice_cols(i * sub_v, (i + 1) * sub_v), alpha));
  }
  pass.combined = interleave_heads(pass.outputs, values.cols());
  return pass;
}

struct HeadGrads {
  Matrix values;
  Matrix projected;
  std::vector<double> query;
};

HeadGrads run_heads_backward(const Matrix& values, const Matrix& projected,
                             std::span<const double> query, const AttentionRecord& record,
                             const std::vector<PoolingOutput>& outputs,
                             std::span<const double> grad) {
  const std::size_t heads = record.heads();
  const std::size_t frames = values.rows();
  const std::size_t value_dim = values.cols();
  const std::size_t sub_v = value_dim / heads;
  const std::size_t sub_q = query.size() / heads;
  HeadGrads g{Matrix(frames, value_dim), Matrix(frames, query.size()),
              std::vector<double>(query.size(), 0.0)};
  std::vector<double> head_grad(2 * sub_v);
  for (std::size_t i = 0; i < heads; ++i) {
    std::copy_n(grad.begin() + i * sub_v, sub_v, head_grad.begin());
    std::copy_n(grad.begin() + value_dim + i * sub_v, sub_v, head_grad.begin() + sub_v);
    auto alpha = record.weights.row(i);
    WeightedStatsGrad ws = weighted_stats_backward(values.slice_cols(i * sub_v, (i + 1) * sub_v),
                                                   alpha, outputs[i], head_grad);
    for (std::size_t t = 0; t < frames; ++t) {
      std::copy(ws.values.row(t).begin(), ws.values.row(t).end(),
                g.values.row(t).begin() + i * sub_v);
    }
    std::vector<double> dlogits = softmax_backward(alpha, ws.weights);
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t j = 0; j < sub_q; ++j) {
        const std::size_t c = i * sub_q + j;
        g.query[c] += dlogits[t] * projected(t, c);
        g.projected(t, c) = dlogits[t] * query[c];
      }
    }
  }
  return g;
}

}  // namespace

std::vector<double> AttentionRecord::max_over_heads() const {
  std::vector<double> out(frames(), 0.0);
  for (std::size_t h = 0; h < heads(); ++h) {
    for (std::size_t t = 0; t < frames(); ++t) out[t] = std::max(out[t], weights(h, t));
  }
  return out;
}

// ------------------------------------------------------ CompatibilityNet

CompatibilityNet::CompatibilityNet(std::size_t key_dim, const std::vector<std::size_t>& widths)
    : key_dim_(key_dim) {
  if (widths.empty()) throw ConfigError("compat_hidden: at least one layer is required");
  std::size_t in = key_dim;
  for (std::size_t w : widths) {
    if (w == 0) throw ConfigError("compat_hidden: widths must be positive");
    blocks_.push_back(Block{nn::Affine(in, w), nn::LeakyRelu(), nn::BatchNorm(w)});
    in = w;
  }
}

std::size_t CompatibilityNet::out_dim() const {
  return blocks_.empty() ? 0 : blocks_.back().affine.params().out_dim();
}

Matrix CompatibilityNet::forward(const Matrix& keys, nn::Mode mode) {
  if (keys.cols() != key_dim_) {
    throw ConfigError("compatibility net: keys have " + std::to_string(keys.cols()) +
                      " dims, expected " + std::to_string(key_dim_));
  }
  Matrix h = keys;
  for (auto& b : blocks_) h = b.norm.forward(b.relu.forward(b.affine.forward(h)), mode);
  return h;
}

Matrix CompatibilityNet::backward(const Matrix& grad_out) {
  Matrix g = grad_out;
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
    g = it->affine.backward(it->relu.backward(it->norm.backward(g)));
  }
  return g;
}

void CompatibilityNet::collect(const std::string& prefix, std::vector<nn::ParamRef>& out) {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = prefix + "." + std::to_string(i);
    blocks_[i].affine.collect(p + ".affine", out);
    blocks_[i].norm.collect(p + ".bn", out);
  }
}

void CompatibilityNet::collect_buffers(const std::string& prefix, std::vector<nn::ParamRef>& out) {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].norm.collect_buffers(prefix + "." + std::to_string(i) + ".bn", out);
  }
}

void CompatibilityNet::zero_grad() {
  for (auto& b : blocks_) {
    b.affine.zero_grad();
    b.norm.zero_grad();
  }
}

// ------------------------------------------------------- free functions

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t t = 0; t < logits.size(); ++t) {
    out[t] = std::exp(logits[t] - mx);
    sum += out[t];
  }
  for (double& v : out) v /= sum;
  return out;
}

std::vector<double> softmax_backward(std::span<const double> probs, std::span<const double> grad) {
  const double inner = dot(probs, grad);
  std::vector<double> out(probs.size());
  for (std::size_t t = 0; t < probs.size(); ++t) out[t] = probs[t] * (grad[t] - inner);
  return out;
}

PoolingOutput weighted_stats(const Matrix& values, std::span<const double> weights) {
  if (weights.size() != values.rows()) throw ConfigError("weighted_stats: weight count mismatch");
  const std::size_t d = values.cols();
  PoolingOutput out{std::vector<double>(2 * d, 0.0)};
  double* mean = out.data.data();
  double* sd = mean + d;
  for (std::size_t t = 0; t < values.rows(); ++t) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += weights[t] * values(t, j);
  }
  for (std::size_t t = 0; t < values.rows(); ++t) {
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = values(t, j) - mean[j];
      sd[j] += weights[t] * diff * diff;
    }
  }
  for (std::size_t j = 0; j < d; ++j) sd[j] = std::sqrt(sd[j] + kVarianceFloor);
  return out;
}

WeightedStatsGrad weighted_stats_backward(const Matrix& values, std::span<const double> weights,
                                          const PoolingOutput& output,
                                          std::span<const double> grad_output) {
  const std::size_t frames = values.rows();
  const std::size_t d = values.cols();
  auto mean = output.mean();
  auto sd = output.stddev();
  double weight_sum = 0.0;
  for (double w : weights) weight_sum += w;
  // Residual of the mean for weights that do not sum exactly to one.
  std::vector<double> drift(d);
  std::vector<double> grad_var(d);
  for (std::size_t j = 0; j < d; ++j) {
    drift[j] = mean[j] * (1.0 - weight_sum);
    grad_var[j] = grad_output[d + j] / (2.0 * sd[j]);
  }
  WeightedStatsGrad g{Matrix(frames, d), std::vector<double>(frames, 0.0)};
  for (std::size_t t = 0; t < frames; ++t) {
    double dw = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double v = values(t, j);
      const double diff = v - mean[j];
      g.values(t, j) = weights[t] * (grad_output[j] + 2.0 * grad_var[j] * (diff - drift[j]));
      dw += grad_output[j] * v + grad_var[j] * (diff * diff - 2.0 * v * drift[j]);
    }
    g.weights[t] = dw;
  }
  return g;
}

PoolingOutput stats_pool(const Matrix& values) {
  if (values.rows() == 0) throw DataError("stats_pool: no frames");
  const std::vector<double> uniform(values.rows(), 1.0 / static_cast<double>(values.rows()));
  return weighted_stats(values, uniform);
}

std::vector<double> attention_logits(const Matrix& keys, CompatibilityNet& net,
                                     std::span<const double> query, nn::Mode mode) {
  if (net.out_dim() != query.size()) {
    throw ConfigError("attention: query has " + std::to_string(query.size()) +
                      " dims but compatibility net outputs " + std::to_string(net.out_dim()));
  }
  const Matrix projected = net.forward(keys, mode);
  std::vector<double> logits(keys.rows());
  for (std::size_t t = 0; t < keys.rows(); ++t) logits[t] = dot(query, projected.row(t));
  return logits;
}

std::pair<PoolingOutput, AttentionRecord> attention_pool(const Matrix& values,
                                                         std::span<const double> logits) {
  if (values.rows() == 0 || logits.size() != values.rows()) {
    throw DataError("attention_pool: " + std::to_string(logits.size()) + " logits for " +
                    std::to_string(values.rows()) + " frames");
  }
  std::vector<double> alpha = softmax(logits);
  AttentionRecord record{Matrix::row_vector(alpha)};
  return {weighted_stats(values, alpha), std::move(record)};
}

void check_head_split(std::size_t value_dim, std::size_t query_dim, std::size_t heads) {
  if (heads == 0) throw ConfigError("heads: must be at least 1");
  if (value_dim % heads != 0) {
    throw ConfigError("heads: " + std::to_string(heads) + " does not divide value dim " +
                      std::to_string(value_dim));
  }
  if (query_dim % heads != 0) {
    throw ConfigError("heads: " + std::to_string(heads) + " does not divide query dim " +
                      std::to_string(query_dim));
  }
}

std::pair<PoolingOutput, AttentionRecord> multihead_pool(const AttentionInputs& inputs,
                                                         CompatibilityNet& net, std::size_t heads,
                                                         nn::Mode mode) {
  const std::size_t frames = inputs.values.rows();
  if (frames == 0 || inputs.keys.rows() != frames) {
    throw DataError("multihead_pool: values and keys must have the same non-zero frame count");
  }
  check_head_split(inputs.values.cols(), inputs.query.size(), heads);
  if (net.out_dim() != inputs.query.size()) {
    throw ConfigError("attention: query has " + std::to_string(inputs.query.size()) +
                      " dims but compatibility net outputs " + std::to_string(net.out_dim()));
  }
  const Matrix projected = net.forward(inputs.keys, mode);
  HeadPass pass = run_heads(inputs.values, projected, inputs.query, heads);
  return {std::move(pass.combined), std::move(pass.record)};
}

// ---------------------------------------------------------- StatsPooling

Matrix StatsPooling::forward(const Matrix& values, const nn::Segments& segments) {
  Cache cache{values, segments, {}};
  const std::size_t batch = segments.size() - 1;
  Matrix out(batch, 2 * values.cols());
  for (std::size_t b = 0; b < batch; ++b) {
    PoolingOutput p = stats_pool(values.slice_rows(segments[b], segments[b + 1]));
    std::copy(p.data.begin(), p.data.end(), out.row(b).begin());
    cache.outputs.push_back(std::move(p));
  }
  cache_ = std::move(cache);
  return out;
}

Matrix StatsPooling::backward(const Matrix& grad_pooled) const {
  if (!cache_) throw UsageError("stats pooling backward called before forward");
  const Matrix& values = cache_->values;
  const auto& seg = cache_->segments;
  Matrix dvalues(values.rows(), values.cols());
  for (std::size_t b = 0; b + 1 < seg.size(); ++b) {
    const std::size_t frames = seg[b + 1] - seg[b];
    const std::vector<double> uniform(frames, 1.0 / static_cast<double>(frames));
    WeightedStatsGrad g = weighted_stats_backward(values.slice_rows(seg[b], seg[b + 1]), uniform,
                                                  cache_->outputs[b], grad_pooled.row(b));
    for (std::size_t t = 0; t < frames; ++t) {
      std::copy(g.values.row(t).begin(), g.values.row(t).end(), dvalues.row(seg[b] + t).begin());
    }
  }
  return dvalues;
}

// ------------------------------------------------------ AttentionPooling

AttentionPooling::AttentionPooling(std::size_t key_dim, std::size_t value_dim,
                                   const std::vector<std::size_t>& compat_widths,
                                   std::size_t heads)
    : net_(key_dim, compat_widths), heads_(heads), value_dim_(value_dim) {
  check_head_split(value_dim, net_.out_dim(), heads);
  query_ = Matrix(1, net_.out_dim());
  grad_query_ = Matrix(1, net_.out_dim());
}

Matrix AttentionPooling::forward(const Matrix& values, const Matrix& keys,
                                 const nn::Segments& segments, nn::Mode mode) {
  if (values.rows() != keys.rows()) throw DataError("attention: values/keys frame mismatch");
  if (values.cols() != value_dim_) throw ConfigError("attention: value dim mismatch");
  Cache cache{values, net_.forward(keys, mode), segments, {}};
  const std::size_t batch = segments.size() - 1;
  Matrix out(batch, 2 * value_dim_);
  records_.clear();
  for (std::size_t b = 0; b < batch; ++b) {
    HeadPass pass = run_heads(values.slice_rows(segments[b], segments[b + 1]),
                              cache.projected.slice_rows(segments[b], segments[b + 1]),
                              query_.row(0), heads_);
    std::copy(pass.combined.data.begin(), pass.combined.data.end(), out.row(b).begin());
    records_.push_back(std::move(pass.record));
    cache.head_outputs.push_back(std::move(pass.outputs));
  }
  cache_ = std::move(cache);
  return out;
}

AttentionPooling::Grads AttentionPooling::backward(const Matrix& grad_pooled) {
  if (!cache_) throw UsageError("attention pooling backward called before forward");
  const auto& seg = cache_->segments;
  Matrix dvalues(cache_->values.rows(), value_dim_);
  Matrix dprojected(cache_->projected.rows(), cache_->projected.cols());
  for (std::size_t b = 0; b + 1 < seg.size(); ++b) {
    HeadGrads g = run_heads_backward(cache_->values.slice_rows(seg[b], seg[b + 1]),
                                     cache_->projected.slice_rows(seg[b], seg[b + 1]),
                                     query_.row(0), records_[b], cache_->head_outputs[b],
                                     grad_pooled.row(b));
    for (std::size_t t = 0; t < g.values.rows(); ++t) {
      std::copy(g.values.row(t).begin(), g.values.row(t).end(), dvalues.row(seg[b] + t).begin());
      std::copy(g.projected.row(t).begin(), g.projected.row(t).end(),
                dprojected.row(seg[b] + t).begin());
    }
    for (std::size_t c = 0; c < g.query.size(); ++c) grad_query_(0, c) += g.query[c];
  }
  Matrix dkeys = net_.backward(dprojected);
  return {std::move(dvalues), std::move(dkeys)};
}

void AttentionPooling::collect_compat(const std::string& prefix, std::vector<nn::ParamRef>& out) {
  net_.collect(prefix, out);
}

void AttentionPooling::collect_query(const std::string& name, std::vector<nn::ParamRef>& out) {
  out.push_back({name, &query_, &grad_query_});
}

void AttentionPooling::collect_buffers(const std::string& prefix, std::vector<nn::ParamRef>& out) {
  net_.collect_buffers(prefix, out);
}

void AttentionPooling::zero_grad() {
  net_.zero_grad();
  grad_query_.fill(0.0);
}

}  // namespace xvec::pooling
