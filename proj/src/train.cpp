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

#include "xvec/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include "xvec/error.hpp"

namespace xvec::train {
namespace {

std::string first_non_finite(const std::vector<nn::ParamRef>& params, bool grads) {
  for (const auto& p : params) {
    const Matrix* m = grads ? p.grad : p.value;
    if (m && !m->all_finite()) {
      return model::to_string(model::group_of(p.name)) + " (" + p.name + ")";
    }
  }
  return {};
}

std::size_t argmax(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd_momentum";
}

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd_momentum" || name == "sgd") return OptimizerKind::kSgdMomentum;
  throw ConfigError("train.optimizer: unknown kind \"" + name + "\" (expected adam|sgd_momentum)");
}

void Hyperparams::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr: must be finite and >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("train.beta1: must be in [0,1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train.beta2: must be in [0,1)");
  if (!(adam_epsilon > 0.0)) throw ConfigError("train.adam_epsilon: must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum: must be in [0,1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay: must be >= 0");
  if (!(grad_clip >= 0.0)) throw ConfigError("train.grad_clip: must be >= 0");
  if (batch_size < 2) throw ConfigError("train.batch_size: batch norm needs at least 2 chunks");
  if (epochs == 0) throw ConfigError("train.epochs: must be positive");
  if (chunk_len == 0) throw ConfigError("train.chunk_len: must be positive");
}

Json to_json(const Hyperparams& hp) {
  return Json{{"optimizer", to_string(hp.optimizer)},
              {"lr", hp.lr},
              {"beta1", hp.beta1},
              {"beta2", hp.beta2},
              {"adam_epsilon", hp.adam_epsilon},
              {"momentum", hp.momentum},
              {"weight_decay", hp.weight_decay},
              {"grad_clip", hp.grad_clip},
              {"batch_size", hp.batch_size},
              {"epochs", hp.epochs},
              {"chunk_len", hp.chunk_len},
              {"seed", hp.seed}};
}

Hyperparams hyperparams_from_json(const Json& j, Hyperparams hp) {
  const std::string ctx = "train";
  require_known_keys(j,
                     {"optimizer", "lr", "beta1", "beta2", "adam_epsilon", "momentum", "weight_decay",
                      "grad_clip", "batch_size", "epochs", "chunk_len", "seed"},
                     ctx);
  if (auto it = j.find("optimizer"); it != j.end()) {
    if (!it->is_string()) throw ConfigError("train.optimizer: expected a string");
    hp.optimizer = parse_optimizer_kind(it->get<std::string>());
  }
  read_field(j, "lr", hp.lr, ctx);
  read_field(j, "beta1", hp.beta1, ctx);
  read_field(j, "beta2", hp.beta2, ctx);
  read_field(j, "adam_epsilon", hp.adam_epsilon, ctx);
  read_field(j, "momentum", hp.momentum, ctx);
  read_field(j, "weight_decay", hp.weight_decay, ctx);
  read_field(j, "grad_clip", hp.grad_clip, ctx);
  read_field(j, "batch_size", hp.batch_size, ctx);
  read_field(j, "epochs", hp.epochs, ctx);
  read_field(j, "chunk_len", hp.chunk_len, ctx);
  read_field(j, "seed", hp.seed, ctx);
  return hp;
}

// -------------------------------------------------------------- Optimizer

Optimizer::Optimizer(const Hyperparams& hp) : hp_(hp) {}

double Optimizer::step(const std::vector<nn::ParamRef>& params) {
  if (first_.empty()) {
    for (const auto& p : params) {
      first_.emplace_back(p.value->rows(), p.value->cols());
      if (hp_.optimizer == OptimizerKind::kAdam) second_.emplace_back(p.value->rows(), p.value->cols());
    }
  }
  if (first_.size() != params.size()) throw UsageError("optimizer: parameter list changed");
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.grad->flat()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  const double clip_scale = (hp_.grad_clip > 0.0 && norm > hp_.grad_clip) ? hp_.grad_clip / norm : 1.0;
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double bias1 = 1.0 - std::pow(hp_.beta1, t);
  const double bias2 = 1.0 - std::pow(hp_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i].value->flat();
    auto grad = params[i].grad->flat();
    if (!first_[i].same_shape(*params[i].value)) throw UsageError("optimizer: shape changed for " + params[i].name);
    auto m = first_[i].flat();
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double g = grad[k] * clip_scale + hp_.weight_decay * value[k];
      if (hp_.optimizer == OptimizerKind::kAdam) {
        auto v = second_[i].flat();
        m[k] = hp_.beta1 * m[k] + (1.0 - hp_.beta1) * g;
        v[k] = hp_.beta2 * v[k] + (1.0 - hp_.beta2) * g * g;
        value[k] -= hp_.lr * (m[k] / bias1) / (std::sqrt(v[k] / bias2) + hp_.adam_epsilon);
      } else {
        m[k] = hp_.momentum * m[k] + g;
        value[k] -= hp_.lr * m[k];
      }
    }
  }
  return norm;
}

// ------------------------------------------------------------- training

StepResult train_step(model::Model& model, const data::Batch& batch, Optimizer& opt) {
  model.zero_grad();
  model::ForwardTrace trace = model.forward(batch.features, nn::Mode::kTrain);
  StepResult r;
  r.loss = nn::cross_entropy(trace.posteriors, batch.labels);
  auto params = model.parameters();
  if (!std::isfinite(r.loss)) {
    std::string where = first_non_finite(params, false);
    throw NumericError("non-finite loss at step " + std::to_string(opt.steps() + 1) +
                       (where.empty() ? std::string(" (all parameters finite; check input features)")
                                      : "; non-finite parameters in group " + where));
  }
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (argmax(trace.posteriors.row(b)) == batch.labels[b]) ++r.correct;
  }
  model.backward(nn::softmax_cross_entropy_grad(trace.posteriors, batch.labels));
  if (std::string where = first_non_finite(params, true); !where.empty()) {
    throw NumericError("non-finite gradient at step " + std::to_string(opt.steps() + 1) + " in group " +
                       where);
  }
  r.grad_norm = opt.step(params);
  return r;
}

TrainResult train(const model::ModelConfig& config, const data::Dataset& dataset,
                  const Hyperparams& hp, const TrainOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  config.validate();
  hp.validate();
  if (dataset.num_speakers() != config.num_speakers) {
    throw DataError("dataset has " + std::to_string(dataset.num_speakers()) +
                    " speakers but model num_speakers is " + std::to_string(config.num_speakers));
  }
  for (const auto& u : dataset.utterances) {
    if (u.features.cols() != config.input_dim) {
      throw DataError("utterance " + u.id + " has " + std::to_string(u.features.cols()) +
                      " feature dims, model expects " + std::to_string(config.input_dim));
    }
  }
  TrainResult result{model::Model::build(config, hp.seed), {}};
  Optimizer opt(hp);
  // Separate stream so batching does not depend on the parameter count.
  data::BatchStream stream(dataset, hp.chunk_len, hp.batch_size, hp.seed * 0x9E3779B97F4A7C15ULL + 1);
  if (options.checkpoint_dir) std::filesystem::create_directories(*options.checkpoint_dir);
  for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
    std::size_t correct = 0;
    std::size_t seen = 0;
    double loss_sum = 0.0;
    const auto batches = stream.next_epoch();
    for (const auto& batch : batches) {
      StepResult r = train_step(result.model, batch, opt);
      result.report.step_losses.push_back(r.loss);
      correct += r.correct;
      seen += batch.size();
      loss_sum += r.loss;
      if (options.log) {
        *options.log << Json{{"step", opt.steps()}, {"loss", r.loss}, {"lr", hp.lr}, {"epoch", epoch}}.dump()
                     << '\n';
      }
    }
    const double accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    result.report.epoch_accuracy.push_back(accuracy);
    if (options.checkpoint_dir) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch-%03zu.xvm", epoch);
      auto path = *options.checkpoint_dir / name;
      result.model.save(path);
      result.report.checkpoints.push_back(path);
    }
    if (options.on_epoch) options.on_epoch(epoch, accuracy, loss_sum / static_cast<double>(batches.size()));
  }
  result.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

// ------------------------------------------------------------- gradcheck

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

double GradcheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& g : groups) m = std::max(m, g.max_rel_error);
  return m;
}

double GradcheckReport::raw_max_rel_error() const {
  double m = 0.0;
  for (const auto& g : groups) m = std::max(m, g.raw_max_rel_error);
  return m;
}

Json GradcheckReport::to_json() const {
  Json groups_json = Json::array();
  for (const auto& g : groups) {
    groups_json.push_back({{"group", g.group},
                           {"max_rel_error", g.max_rel_error},
                           {"worst", g.worst_entry},
                           {"worst_analytic", g.worst_analytic},
                           {"worst_numeric", g.worst_numeric},
                           {"checked", g.checked},
                           {"at_noise_floor", g.at_noise_floor},
                           {"across_kink", g.across_kink},
                           {"raw_max_rel_error", g.raw_max_rel_error}});
  }
  return Json{{"max_rel_error", max_rel_error()},
              {"raw_max_rel_error", raw_max_rel_error()},
              {"groups", groups_json}};
}

GradcheckReport gradcheck(const std::vector<nn::ParamRef>& params, const std::function<double()>& loss,
                          const std::function<std::string(const std::string&)>& group_of, double step,
                          const KinkSignature& signature) {
  GradcheckReport report;
  auto group_entry = [&](const std::string& name) -> GroupError& {
    for (auto& g : report.groups) {
      if (g.group == name) return g;
    }
    report.groups.push_back(GroupError{name});
    return report.groups.back();
  };
  for (const auto& p : params) {
    GroupError& g = group_entry(group_of(p.name));
    auto value = p.value->flat();
    auto grad = p.grad->flat();
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double saved = value[k];
      value[k] = saved + step;
      const double up = loss();
      std::vector<bool> up_signs;
      if (signature) up_signs = signature();
      value[k] = saved - step;
      const double down = loss();
      value[k] = saved;
      if (signature && signature() != up_signs) {
        ++g.checked;
        ++g.across_kink;
        continue;
      }
      const double numeric = (up - down) / (2.0 * step);
      const double err = relative_error(grad[k], numeric);
      ++g.checked;
      g.raw_max_rel_error = std::max(g.raw_max_rel_error, err);
      if (std::max(std::abs(grad[k]), std::abs(numeric)) < kGradcheckNoiseFloor) {
        ++g.at_noise_floor;
        continue;
      }
      if (g.worst_entry.empty() || err > g.max_rel_error) {
        g.max_rel_error = err;
        g.worst_entry = p.name + "[" + std::to_string(k) + "]";
        g.worst_analytic = grad[k];
        g.worst_numeric = numeric;
      }
    }
  }
  return report;
}

GradcheckReport gradcheck_model(model::Model& model, std::span<const Matrix> batch,
                                std::span<const std::size_t> labels, double step) {
  model.zero_grad();
  model.loss_and_gradient(batch, labels);
  auto loss = [&] {
    auto trace = model.forward(batch, nn::Mode::kTrain);
    return nn::cross_entropy(trace.posteriors, labels);
  };
  return gradcheck(
      model.parameters(), loss, [](const std::string& name) { return model::to_string(model::group_of(name)); },
      step, [&] { return model.kink_signature(); });
}

GradcheckReport gradcheck_model(const model::ModelConfig& config, std::uint64_t seed,
                                std::size_t batch_size, std::size_t frames, double step) {
  model::Model m = model::Model::build(config, seed);
  std::mt19937_64 rng(seed + 7919);
  std::normal_distribution<double> normal(0.0, 1.0);
  // The trained-model init keeps attention near uniform; a query of scale
  // 1/sqrt(d_q) gives unit-variance logits so the softmax coupling is exercised.
  const double query_scale = config.query_dim() > 0 ? 1.0 / std::sqrt(double(config.query_dim())) : 0.0;
  for (auto& p : m.parameters()) {
    if (p.name == "query") {
      for (double& v : p.value->flat()) v = query_scale * normal(rng);
    }
  }
  std::vector<Matrix> batch;
  std::vector<std::size_t> labels;
  for (std::size_t b = 0; b < batch_size; ++b) {
    Matrix x(frames, config.input_dim);
    for (double& v : x.flat()) v = normal(rng);
    batch.push_back(std::move(x));
    labels.push_back(b % config.num_speakers);
  }
  return gradcheck_model(m, batch, labels, step);
}

}  // namespace xvec::train
