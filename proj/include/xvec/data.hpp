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
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "xvec/json_util.hpp"
#include "xvec/matrix.hpp"

namespace xvec::data {

struct Utterance {
  std::string id;
  std::size_t speaker = 0;  // dense index into Dataset::speakers
  Matrix features;          // T x d
  // Ground-truth informativeness per frame, synthetic data only.
  std::optional<std::vector<std::uint8_t>> gate;
};

// Speakers are N(0, I) identity vectors. Each utterance runs a two-state
// Markov gate over its frames; x_t = gate_t * scale * s_k + N(0, sigma^2 I).
struct SynthConfig {
  std::size_t num_speakers = 32;
  std::size_t utts_per_speaker = 20;
  std::size_t min_frames = 150;
  std::size_t max_frames = 300;
  std::size_t dim = 20;
  double p_stay_on = 0.9;
  double p_stay_off = 0.9;
  double scale = 1.0;
  double noise_sigma = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
  // Long-run fraction of informative frames.
  double stationary_on() const;
};

Json to_json(const SynthConfig& config);
SynthConfig synth_config_from_json(const Json& j, SynthConfig base = {});

enum class Split { kTrain, kEval };

struct Dataset {
  std::vector<Utterance> utterances;
  std::vector<std::string> speakers;
  Split split = Split::kTrain;

  std::size_t num_speakers() const { return speakers.size(); }
  const Utterance* find(std::string_view id) const;
};

// `prefix` is prepended to speaker and utterance ids so that independently
// generated sets (e.g. train and held-out) never collide.
Dataset gen_synthetic(const SynthConfig& config, Split split = Split::kTrain,
                      const std::string& prefix = "");

// Feature file: "XVF1", u32 T, u32 d, then T*d little-endian float32, row-major.
std::string encode_features(const Matrix& features);
Matrix decode_features(std::string_view bytes);
void write_features(const Matrix& features, const std::filesystem::path& path);
Matrix read_features(const std::filesystem::path& path);

// Writes manifest.tsv ("utt<TAB>speaker<TAB>relative path"), feats/*.xvf
// and, when any utterance carries one, gates.tsv ("utt<TAB>0101...").
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir, Split split = Split::kTrain);

struct Batch {
  std::vector<Matrix> features;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> utterances;  // index into Dataset::utterances
  std::vector<bool> padded;             // chunk longer than its utterance

  std::size_t size() const { return features.size(); }
};

// Each epoch visits every utterance once in shuffled order and cuts one
// random contiguous chunk of chunk_len frames from it. A trailing batch of a
// single chunk is merged into the previous one so batch norm always sees at
// least two rows.
class BatchStream {
 public:
  BatchStream(const Dataset& dataset, std::size_t chunk_len, std::size_t batch_size,
              std::uint64_t seed);

  std::vector<Batch> next_epoch();

 private:
  const Dataset* dataset_;
  std::size_t chunk_len_;
  std::size_t batch_size_;
  std::mt19937_64 rng_;
};

// Batches of the first epoch of BatchStream(dataset, chunk_len, batch_size, seed).
std::vector<Batch> make_batches(const Dataset& dataset, std::size_t chunk_len,
                                std::size_t batch_size, std::uint64_t seed);

// Frames [start, start + len) with indices past the end clamped to the last frame.
Matrix cut_chunk(const Matrix& features, std::size_t start, std::size_t len);

}  // namespace xvec::data
