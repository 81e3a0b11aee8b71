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
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "xvec/data.hpp"
#include "xvec/json_util.hpp"
#include "xvec/model.hpp"
#include "xvec/train.hpp"

namespace xvec::cli {

// Held-out speakers written next to the training set by gen-data. They use
// the frame range, dimension and noise of the training synth config.
struct HeldoutConfig {
  std::size_t num_speakers = 16;
  std::size_t utts_per_speaker = 8;
  std::size_t enroll_per_speaker = 3;
};

struct Paths {
  std::string data;
  std::string model;
  std::string out;
};

// Everything a run needs, read from one JSON document with the sections
// "model", "synth", "heldout", "train" and "paths". Unknown keys are
// rejected before any work starts.
struct RunConfig {
  model::ModelConfig model = model::ModelConfig::desk_scale();
  data::SynthConfig synth;
  HeldoutConfig heldout;
  train::Hyperparams train;
  Paths paths;
};

Json to_json(const RunConfig& config);
RunConfig run_config_from_json(const Json& j);
RunConfig load_run_config(const std::filesystem::path& path);

// Synth config for the held-out speakers of `config`.
data::SynthConfig heldout_synth(const RunConfig& config);

// Parses "500", "100-500" or "100-100-500".
std::vector<std::size_t> parse_compat(const std::string& text);

// Entry point of the xvec tool. Returns the process exit code:
// 0 success, 1 usage/config, 2 data/format, 3 numeric failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace xvec::cli
