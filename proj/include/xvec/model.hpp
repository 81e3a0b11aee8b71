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
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xvec/json_util.hpp"
#include "xvec/matrix.hpp"
#include "xvec/nn.hpp"
#include "xvec/pooling.hpp"

namespace xvec::model {

enum class PoolingKind { kStats, kAttention, kMultiHead };

std::string to_string(PoolingKind kind);
// Accepts "stats", "att"/"attention" and "multihead".
PoolingKind parse_pooling_kind(const std::string& name);

struct FrameLayerSpec {
  nn::SpliceContext context;
  std::size_t width = 0;
};

struct ModelConfig {
  std::size_t input_dim = 0;
  std::vector<FrameLayerSpec> frame_layers;
  PoolingKind pooling = PoolingKind::kStats;
  // 1-based index of the frame layer whose output feeds the keys.
  std::size_t key_layer = 1;
  // Compatibility network widths; the last entry is the query dimension.
  std::vector<std::size_t> compat_hidden;
  // Only used by multihead pooling; single-head attention always uses one.
  std::size_t heads = 1;
  std::vector<std::size_t> utterance_layers;
  std::size_t num_speakers = 0;
  // 0-based utterance layer whose affine output is the embedding.
  std::size_t embedding_tap = 0;

  std::size_t value_dim() const { return frame_layers.empty() ? 0 : frame_layers.back().width; }
  std::size_t query_dim() const { return compat_hidden.empty() ? 0 : compat_hidden.back(); }
  std::size_t effective_heads() const { return pooling == PoolingKind::kMultiHead ? heads : 1; }
  std::size_t embedding_dim() const { return utterance_layers.at(embedding_tap); }

  // Throws ConfigError naming the offending field.
  void validate() const;

  // 5 frame layers of 64,64,64,64,192, query dim 100, 4 heads.
  static ModelConfig desk_scale(PoolingKind pooling = PoolingKind::kStats);
  // Kaldi SRE16 recipe shape: 512x4 + 1500 frame nodes, 512-512 segment layers.
  static ModelConfig recipe_scale(PoolingKind pooling = PoolingKind::kStats);
  // Small enough for finite-difference checks.
  static ModelConfig tiny(PoolingKind pooling = PoolingKind::kStats);
};

Json to_json(const ModelConfig& config);
// Rejects unknown keys; missing keys keep the values already in `base`.
ModelConfig model_config_from_json(const Json& j, ModelConfig base = {});

enum class ParamGroup { kFrame, kUtterance, kCompat, kQuery };
std::string to_string(ParamGroup group);
ParamGroup group_of(const std::string& param_name);

struct ForwardTrace {
  std::vector<Matrix> frame_activations;  // f^1..f^L, stacked over the batch
  nn::Segments segments;
  Matrix pooled;                              // B x 2*d_v
  std::vector<Matrix> utterance_affine;       // per utterance layer, pre-activation
  std::vector<Matrix> utterance_activations;  // per utterance layer, after batch norm
  Matrix logits;
  Matrix posteriors;
  std::vector<pooling::AttentionRecord> attention;  // empty for stats pooling
};

struct Embedding {
  std::string utt_id;
  std::vector<double> vector;
};

class Model {
 public:
  Model() = default;

  // Glorot-uniform weights, zero biases, unit gamma, zero beta; the query is
  // drawn from a small zero-mean normal so initial attention is near uniform.
  static Model build(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  ForwardTrace forward(std::span<const Matrix> batch, nn::Mode mode);
  ForwardTrace forward(const Matrix& features, nn::Mode mode);

  // Back-propagates dL/dlogits from the latest forward pass, accumulating
  // into every parameter gradient.
  void backward(const Matrix& grad_logits);

  // Mean cross entropy over the batch; also runs backward.
  double loss_and_gradient(std::span<const Matrix> batch, std::span<const std::size_t> labels);

  Embedding extract_embedding(const Matrix& features, std::string utt_id = {});

  // Sign pattern of every leaky-ReLU input in the latest forward pass. Two
  // passes with equal patterns lie on the same linear piece.
  std::vector<bool> kink_signature() const;

  std::vector<nn::ParamRef> parameters();
  // Trainable tensors and running statistics in declaration order.
  std::vector<nn::ParamRef> tensors();
  void zero_grad();

  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);

 private:
  struct FrameBlock {
    nn::Splice splice;
    nn::Affine affine;
    nn::LeakyRelu relu;
    nn::BatchNorm norm;
  };
  struct UtteranceBlock {
    nn::Affine affine;
    nn::LeakyRelu relu;
    nn::BatchNorm norm;
  };

  void collect(std::vector<nn::ParamRef>& out, bool with_buffers);

  ModelConfig config_;
  std::vector<FrameBlock> frame_;
  pooling::StatsPooling stats_;
  std::optional<pooling::AttentionPooling> attention_;
  std::vector<UtteranceBlock> utterance_;
  nn::Affine classifier_;
  bool has_forward_ = false;
};

}  // namespace xvec::model
