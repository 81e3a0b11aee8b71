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

#include "xvec/model.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <fstream>
#include <random>
#include <sstream>

#include "xvec/error.hpp"

namespace xvec::model {
namespace {

constexpr char kCheckpointMagic[4] = {'X', 'V', 'M', '1'};

// Query entries are drawn with this standard deviation divided by
// sqrt(d_q), which keeps the initial logits well below one.
constexpr double kQueryInitScale = 0.01;

std::vector<FrameLayerSpec> recipe_frame_layers(std::size_t narrow, std::size_t wide) {
  return {{{{-2, -1, 0, 1, 2}}, narrow},
          {{{-2, 0, 2}}, narrow},
          {{{-3, 0, 3}}, narrow},
          {{{0}}, narrow},
          {{{0}}, wide}};
}

void put_u64(std::ostream& os, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(bytes, 8);
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::uint64_t offset() const { return pos_; }

  void expect(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what, pos_);
    }
  }

  std::uint64_t u64(const char* what) {
    expect(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return v;
  }

  std::string take(std::size_t n, const char* what) {
    expect(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

Json context_to_json(const nn::SpliceContext& ctx) { return ctx.offsets; }

}  // namespace

std::string to_string(PoolingKind kind) {
  switch (kind) {
    case PoolingKind::kStats:
      return "stats";
    case PoolingKind::kAttention:
      return "attention";
    case PoolingKind::kMultiHead:
      return "multihead";
  }
  return "stats";
}

PoolingKind parse_pooling_kind(const std::string& name) {
  if (name == "stats") return PoolingKind::kStats;
  if (name == "att" || name == "attention") return PoolingKind::kAttention;
  if (name == "multihead") return PoolingKind::kMultiHead;
  throw ConfigError("pooling: unknown kind \"" + name + "\" (expected stats|att|multihead)");
}

std::string to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::kFrame:
      return "frame";
    case ParamGroup::kUtterance:
      return "utterance";
    case ParamGroup::kCompat:
      return "compat";
    case ParamGroup::kQuery:
      return "query";
  }
  return "frame";
}

ParamGroup group_of(const std::string& name) {
  if (name.starts_with("frame.")) return ParamGroup::kFrame;
  if (name.starts_with("compat.")) return ParamGroup::kCompat;
  if (name == "query") return ParamGroup::kQuery;
  return ParamGroup::kUtterance;
}

// ----------------------------------------------------------- ModelConfig

void ModelConfig::validate() const {
  if (input_dim == 0) throw ConfigError("input_dim: must be positive");
  if (frame_layers.empty()) throw ConfigError("frame_layers: at least one layer is required");
  for (std::size_t i = 0; i < frame_layers.size(); ++i) {
    try {
      frame_layers[i].context.validate();
    } catch (const ConfigError& e) {
      throw ConfigError("frame_layers[" + std::to_string(i) + "].context: " + e.what());
    }
    if (frame_layers[i].width == 0) {
      throw ConfigError("frame_layers[" + std::to_string(i) + "].width: must be positive");
    }
  }
  if (key_layer < 1 || key_layer > frame_layers.size()) {
    throw ConfigError("key_layer: must be in [1," + std::to_string(frame_layers.size()) + "]");
  }
  if (heads == 0) throw ConfigError("heads: must be at least 1");
  if (pooling != PoolingKind::kStats) {
    if (compat_hidden.empty()) throw ConfigError("compat_hidden: at least one layer is required");
    for (std::size_t w : compat_hidden) {
      if (w == 0) throw ConfigError("compat_hidden: widths must be positive");
    }
    if (pooling == PoolingKind::kMultiHead) {
      if (value_dim() % heads != 0) {
        throw ConfigError("heads: " + std::to_string(heads) + " does not divide the last frame width " +
                          std::to_string(value_dim()));
      }
      if (query_dim() % heads != 0) {
        throw ConfigError("heads: " + std::to_string(heads) + " does not divide the query dim " +
                          std::to_string(query_dim()));
      }
    }
  }
  if (utterance_layers.empty()) throw ConfigError("utterance_layers: at least one layer is required");
  for (std::size_t w : utterance_layers) {
    if (w == 0) throw ConfigError("utterance_layers: widths must be positive");
  }
  if (embedding_tap >= utterance_layers.size()) {
    throw ConfigError("embedding_tap: must be below " + std::to_string(utterance_layers.size()));
  }
  if (num_speakers < 2) throw ConfigError("num_speakers: at least 2 speakers are required");
}

ModelConfig ModelConfig::desk_scale(PoolingKind pooling) {
  ModelConfig c;
  c.input_dim = 20;
  c.frame_layers = recipe_frame_layers(64, 192);
  c.pooling = pooling;
  c.key_layer = 4;
  c.compat_hidden = {100};
  c.heads = 4;
  c.utterance_layers = {64, 64};
  c.num_speakers = 32;
  return c;
}

ModelConfig ModelConfig::recipe_scale(PoolingKind pooling) {
  ModelConfig c;
  c.input_dim = 60;
  c.frame_layers = recipe_frame_layers(512, 1500);
  c.pooling = pooling;
  c.key_layer = 4;
  c.compat_hidden = {500};
  c.heads = 50;
  c.utterance_layers = {512, 512};
  c.num_speakers = 9964;
  return c;
}

ModelConfig ModelConfig::tiny(PoolingKind pooling) {
  ModelConfig c;
  c.input_dim = 4;
  c.frame_layers = {{{{-1, 0, 1}}, 6}, {{{-1, 0, 1}}, 6}, {{{0}}, 8}};
  c.pooling = pooling;
  c.key_layer = 2;
  c.compat_hidden = {4};
  c.heads = 2;
  c.utterance_layers = {5};
  c.num_speakers = 3;
  return c;
}

Json to_json(const ModelConfig& c) {
  Json layers = Json::array();
  for (const auto& l : c.frame_layers) {
    layers.push_back({{"context", context_to_json(l.context)}, {"width", l.width}});
  }
  return Json{{"input_dim", c.input_dim},
              {"frame_layers", layers},
              {"pooling", to_string(c.pooling)},
              {"key_layer", c.key_layer},
              {"compat_hidden", c.compat_hidden},
              {"heads", c.heads},
              {"utterance_layers", c.utterance_layers},
              {"num_speakers", c.num_speakers},
              {"embedding_tap", c.embedding_tap}};
}

ModelConfig model_config_from_json(const Json& j, ModelConfig c) {
  const std::string ctx = "model";
  require_known_keys(j,
                     {"input_dim", "frame_layers", "pooling", "key_layer", "compat_hidden", "heads",
                      "utterance_layers", "num_speakers", "embedding_tap"},
                     ctx);
  read_field(j, "input_dim", c.input_dim, ctx);
  if (auto it = j.find("frame_layers"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("model.frame_layers: expected an array");
    c.frame_layers.clear();
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string lctx = ctx + ".frame_layers[" + std::to_string(i) + "]";
      const Json& lj = (*it)[i];
      require_known_keys(lj, {"context", "width"}, lctx);
      FrameLayerSpec spec;
      read_field(lj, "context", spec.context.offsets, lctx);
      read_field(lj, "width", spec.width, lctx);
      c.frame_layers.push_back(std::move(spec));
    }
  }
  if (auto it = j.find("pooling"); it != j.end()) {
    if (!it->is_string()) throw ConfigError("model.pooling: expected a string");
    c.pooling = parse_pooling_kind(it->get<std::string>());
  }
  read_field(j, "key_layer", c.key_layer, ctx);
  read_field(j, "compat_hidden", c.compat_hidden, ctx);
  read_field(j, "heads", c.heads, ctx);
  read_field(j, "utterance_layers", c.utterance_layers, ctx);
  read_field(j, "num_speakers", c.num_speakers, ctx);
  read_field(j, "embedding_tap", c.embedding_tap, ctx);
  return c;
}

// ----------------------------------------------------------------- Model

Model Model::build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config_ = config;
  std::size_t in = config.input_dim;
  for (const auto& spec : config.frame_layers) {
    m.frame_.push_back(FrameBlock{nn::Splice(spec.context), nn::Affine(in * spec.context.size(), spec.width),
                                  nn::LeakyRelu(), nn::BatchNorm(spec.width)});
    in = spec.width;
  }
  if (config.pooling != PoolingKind::kStats) {
    const std::size_t key_dim = config.frame_layers[config.key_layer - 1].width;
    m.attention_.emplace(key_dim, config.value_dim(), config.compat_hidden, config.effective_heads());
  }
  in = 2 * config.value_dim();
  for (std::size_t w : config.utterance_layers) {
    m.utterance_.push_back(UtteranceBlock{nn::Affine(in, w), nn::LeakyRelu(), nn::BatchNorm(w)});
    in = w;
  }
  m.classifier_ = nn::Affine(in, config.num_speakers);

  std::mt19937_64 rng(seed);
  for (auto& p : m.parameters()) {
    Matrix& v = *p.value;
    if (p.name.ends_with(".weight")) {
      const double limit = std::sqrt(6.0 / static_cast<double>(v.rows() + v.cols()));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (double& x : v.flat()) x = dist(rng);
    } else if (p.name == "query") {
      std::normal_distribution<double> dist(
          0.0, kQueryInitScale / std::sqrt(static_cast<double>(v.cols())));
      for (double& x : v.flat()) x = dist(rng);
    }
  }
  return m;
}

ForwardTrace Model::forward(std::span<const Matrix> batch, nn::Mode mode) {
  if (batch.empty()) throw DataError("forward: empty batch");
  ForwardTrace trace;
  trace.segments.push_back(0);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b].cols() != config_.input_dim) {
      throw DataError("forward: utterance " + std::to_string(b) + " has " +
                      std::to_string(batch[b].cols()) + " feature dims, model expects " +
                      std::to_string(config_.input_dim));
    }
    if (batch[b].rows() == 0) throw DataError("forward: utterance " + std::to_string(b) + " has no frames");
    trace.segments.push_back(trace.segments.back() + batch[b].rows());
  }
  Matrix h = vstack(batch);
  for (auto& block : frame_) {
    h = block.norm.forward(block.relu.forward(block.affine.forward(block.splice.forward(h, trace.segments))),
                           mode);
    trace.frame_activations.push_back(h);
  }
  const Matrix& values = trace.frame_activations.back();
  if (attention_) {
    const Matrix& keys = trace.frame_activations[config_.key_layer - 1];
    trace.pooled = attention_->forward(values, keys, trace.segments, mode);
    trace.attention = attention_->records();
  } else {
    trace.pooled = stats_.forward(values, trace.segments);
  }
  Matrix u = trace.pooled;
  for (auto& block : utterance_) {
    Matrix z = block.affine.forward(u);
    u = block.norm.forward(block.relu.forward(z), mode);
    trace.utterance_affine.push_back(std::move(z));
    trace.utterance_activations.push_back(u);
  }
  trace.logits = classifier_.forward(u);
  trace.posteriors = nn::softmax_rows(trace.logits);
  has_forward_ = true;
  return trace;
}

ForwardTrace Model::forward(const Matrix& features, nn::Mode mode) {
  return forward(std::span<const Matrix>(&features, 1), mode);
}

void Model::backward(const Matrix& grad_logits) {
  if (!has_forward_) throw UsageError("model backward called before forward");
  Matrix g = classifier_.backward(grad_logits);
  for (auto it = utterance_.rbegin(); it != utterance_.rend(); ++it) {
    g = it->affine.backward(it->relu.backward(it->norm.backward(g)));
  }
  Matrix grad_values;
  std::optional<Matrix> grad_keys;
  if (attention_) {
    auto grads = attention_->backward(g);
    grad_values = std::move(grads.values);
    grad_keys = std::move(grads.keys);
  } else {
    grad_values = stats_.backward(g);
  }
  Matrix dh = std::move(grad_values);
  for (std::size_t l = frame_.size(); l-- > 0;) {
    if (grad_keys && l == config_.key_layer - 1) dh += *grad_keys;
    auto& block = frame_[l];
    Matrix ga = block.affine.backward(block.relu.backward(block.norm.backward(dh)));
    if (l > 0) dh = block.splice.backward(ga);
  }
}

double Model::loss_and_gradient(std::span<const Matrix> batch, std::span<const std::size_t> labels) {
  ForwardTrace trace = forward(batch, nn::Mode::kTrain);
  const double loss = nn::cross_entropy(trace.posteriors, labels);
  backward(nn::softmax_cross_entropy_grad(trace.posteriors, labels));
  return loss;
}

Embedding Model::extract_embedding(const Matrix& features, std::string utt_id) {
  ForwardTrace trace = forward(features, nn::Mode::kInfer);
  auto row = trace.utterance_affine.at(config_.embedding_tap).row(0);
  return {std::move(utt_id), std::vector<double>(row.begin(), row.end())};
}

void Model::collect(std::vector<nn::ParamRef>& out, bool with_buffers) {
  for (std::size_t l = 0; l < frame_.size(); ++l) {
    const std::string p = "frame." + std::to_string(l);
    frame_[l].affine.collect(p + ".affine", out);
    frame_[l].norm.collect(p + ".bn", out);
    if (with_buffers) frame_[l].norm.collect_buffers(p + ".bn", out);
  }
  if (attention_) {
    auto& net = attention_->net();
    for (std::size_t i = 0; i < net.blocks().size(); ++i) {
      const std::string p = "compat." + std::to_string(i);
      net.blocks()[i].affine.collect(p + ".affine", out);
      net.blocks()[i].norm.collect(p + ".bn", out);
      if (with_buffers) net.blocks()[i].norm.collect_buffers(p + ".bn", out);
    }
    attention_->collect_query("query", out);
  }
  for (std::size_t j = 0; j < utterance_.size(); ++j) {
    const std::string p = "utt." + std::to_string(j);
    utterance_[j].affine.collect(p + ".affine", out);
    utterance_[j].norm.collect(p + ".bn", out);
    if (with_buffers) utterance_[j].norm.collect_buffers(p + ".bn", out);
  }
  classifier_.collect("classifier", out);
}

std::vector<bool> Model::kink_signature() const {
  std::vector<bool> signs;
  for (const auto& b : frame_) b.relu.append_signs(signs);
  if (attention_) {
    for (const auto& b : attention_->net().blocks()) b.relu.append_signs(signs);
  }
  for (const auto& b : utterance_) b.relu.append_signs(signs);
  return signs;
}

std::vector<nn::ParamRef> Model::parameters() {
  std::vector<nn::ParamRef> out;
  collect(out, false);
  return out;
}

std::vector<nn::ParamRef> Model::tensors() {
  std::vector<nn::ParamRef> out;
  collect(out, true);
  return out;
}

void Model::zero_grad() {
  for (auto& p : parameters()) p.grad->fill(0.0);
}

// Layout: "XVM1", u64 config length, config JSON bytes, then every tensor
// as a u64 element count followed by little-endian doubles.
void Model::save(const std::filesystem::path& path) const {
  std::ostringstream os(std::ios::binary);
  os.write(kCheckpointMagic, 4);
  const std::string cfg = to_json(config_).dump();
  put_u64(os, cfg.size());
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  for (const auto& t : const_cast<Model*>(this)->tensors()) {
    put_u64(os, t.value->size());
    for (double v : t.value->flat()) put_u64(os, std::bit_cast<std::uint64_t>(v));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  const std::string bytes = os.str();
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing " + path.string());
}

Model Model::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes));
  if (r.take(4, "magic") != std::string(kCheckpointMagic, 4)) {
    throw FormatError("bad checkpoint magic in " + path.string(), 0);
  }
  const std::uint64_t cfg_len = r.u64("config length");
  const std::uint64_t cfg_offset = r.offset();
  Json cfg_json;
  try {
    cfg_json = Json::parse(r.take(cfg_len, "config"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint config: ") + e.what(), cfg_offset);
  }
  Model m = build(model_config_from_json(cfg_json), 0);
  for (auto& t : m.tensors()) {
    const std::uint64_t at = r.offset();
    const std::uint64_t count = r.u64("tensor size");
    if (count != t.value->size()) {
      throw FormatError("tensor " + t.name + " has " + std::to_string(count) + " entries, expected " +
                            std::to_string(t.value->size()),
                        at);
    }
    r.expect(count * 8, t.name.c_str());
    for (double& v : t.value->flat()) v = std::bit_cast<double>(r.u64(t.name.c_str()));
  }
  if (!r.at_end()) throw FormatError("trailing bytes in checkpoint", r.offset());
  return m;
}

}  // namespace xvec::model
