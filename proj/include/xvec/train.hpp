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
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "xvec/data.hpp"
#include "xvec/json_util.hpp"
#include "xvec/model.hpp"

namespace xvec::train {

enum class OptimizerKind { kSgdMomentum, kAdam };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(const std::string& name);

struct Hyperparams {
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double momentum = 0.9;  // sgd_momentum only
  double weight_decay = 0.0;
  double grad_clip = 5.0;  // 0 disables clipping
  std::size_t batch_size = 32;
  std::size_t epochs = 20;
  std::size_t chunk_len = 150;
  std::uint64_t seed = 1;

  void validate() const;
};

Json to_json(const Hyperparams& hp);
Hyperparams hyperparams_from_json(const Json& j, Hyperparams base = {});

// Optimizer state: per-parameter accumulators are created on first use and
// must keep matching the parameter list they were created for.
class Optimizer {
 public:
  explicit Optimizer(const Hyperparams& hp);

  // Clips the global gradient norm, then updates every parameter in place.
  // Returns the gradient norm before clipping.
  double step(const std::vector<nn::ParamRef>& params);

  const Hyperparams& hyperparams() const { return hp_; }
  std::size_t steps() const { return steps_; }

 private:
  Hyperparams hp_;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
  std::size_t steps_ = 0;
};

struct StepResult {
  double loss = 0.0;
  double grad_norm = 0.0;
  std::size_t correct = 0;  // chunks whose arg-max posterior is the label
};

// Forward on every chunk, mean cross entropy, back-propagation and one
// optimizer update. Throws NumericError naming the parameter group when
// the loss or a gradient is not finite.
StepResult train_step(model::Model& model, const data::Batch& batch, Optimizer& opt);

struct TrainReport {
  std::vector<double> step_losses;
  std::vector<double> epoch_accuracy;
  std::vector<std::filesystem::path> checkpoints;
  double wall_seconds = 0.0;
};

struct TrainOptions {
  // When set, a checkpoint is written after every epoch.
  std::optional<std::filesystem::path> checkpoint_dir;
  // Receives one JSON object per step: {"step","loss","lr","epoch"}.
  std::ostream* log = nullptr;
  // Called after every epoch with (epoch, accuracy, mean loss).
  std::function<void(std::size_t, double, double)> on_epoch;
};

struct TrainResult {
  model::Model model;
  TrainReport report;
};

TrainResult train(const model::ModelConfig& config, const data::Dataset& dataset,
                  const Hyperparams& hp, const TrainOptions& options = {});

// ---------------------------------------------------------------- gradcheck

inline constexpr double kGradcheckStep = 1e-5;
inline constexpr double kGradcheckTolerance = 1e-4;
// Central differences of an O(1) loss carry round-off of about
// ulp(loss) / (2 * step) ~ 1e-11. Entries whose analytic and numeric values
// are both below this floor are gradients that vanish identically (a shift
// removed by a following normalization or softmax) and carry no signal.
inline constexpr double kGradcheckNoiseFloor = 1e-9;

// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

struct GroupError {
  std::string group;
  double max_rel_error = 0.0;
  std::string worst_entry;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  // Entries at the noise floor are counted here and left out of max_rel_error;
  // raw_max_rel_error includes them.
  std::size_t at_noise_floor = 0;
  // Entries whose +-step probes fall on different linear pieces of a leaky
  // ReLU; the central difference is meaningless there, so they are skipped.
  std::size_t across_kink = 0;
  double raw_max_rel_error = 0.0;
  std::size_t checked = 0;
};

struct GradcheckReport {
  std::vector<GroupError> groups;

  double max_rel_error() const;
  double raw_max_rel_error() const;
  bool passed(double tolerance = kGradcheckTolerance) const {
    return max_rel_error() < tolerance;
  }
  Json to_json() const;
};

// Compares the gradients stored in `params` (filled by the caller before the
// call) against central differences of `loss`. Entries are grouped by
// `group_of(param name)`.
using KinkSignature = std::function<std::vector<bool>()>;

GradcheckReport gradcheck(const std::vector<nn::ParamRef>& params, const std::function<double()>& loss,
                          const std::function<std::string(const std::string&)>& group_of,
                          double step = kGradcheckStep, const KinkSignature& signature = {});

// Mean cross entropy of a train-mode forward pass, checked for every
// parameter group of the model.
GradcheckReport gradcheck_model(model::Model& model, std::span<const Matrix> batch,
                                std::span<const std::size_t> labels, double step = kGradcheckStep);

// Builds `config` from `seed` and checks it on a random batch.
GradcheckReport gradcheck_model(const model::ModelConfig& config, std::uint64_t seed,
                                std::size_t batch_size = 4, std::size_t frames = 5,
                                double step = kGradcheckStep);

}  // namespace xvec::train
