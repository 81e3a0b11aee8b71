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
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "xvec/data.hpp"
#include "xvec/json_util.hpp"
#include "xvec/model.hpp"
#include "xvec/pooling.hpp"

namespace xvec::eval {

struct Trial {
  std::string enroll_name;          // speaker label as written in the trial list
  std::vector<std::string> enroll;  // utterance ids averaged into the model
  std::string test;
  bool target = false;
};

struct TrialScores {
  std::vector<double> scores;
  std::vector<bool> target;
  // Optional identifiers, parallel to scores when filled by score_trials.
  std::vector<std::string> enroll_names;
  std::vector<std::string> test_ids;

  std::size_t size() const { return scores.size(); }
  std::size_t num_targets() const;
  std::size_t num_nontargets() const { return size() - num_targets(); }
  void add(double score, bool is_target) {
    scores.push_back(score);
    target.push_back(is_target);
  }
  // Throws DataError unless scores are finite with both classes present.
  void validate() const;
};

struct DcfParams {
  double p_target;
  double c_miss;
  double c_fa;
};
inline constexpr DcfParams kSre08{0.01, 10.0, 1.0};
inline constexpr DcfParams kSre10{0.001, 1.0, 1.0};

struct MetricsReport {
  double eer = 0.0;
  double min_dcf08 = 0.0;
  double min_dcf10 = 0.0;
  std::size_t targets = 0;
  std::size_t nontargets = 0;

  Json to_json() const;
};

using EmbeddingTable = std::map<std::string, std::vector<double>>;

double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Enrollment embeddings are averaged then length-normalized; the score is
// the cosine against the test embedding.
TrialScores score_trials(const EmbeddingTable& embeddings, std::span<const Trial> trials);

// Equal error rate with linear interpolation between adjacent operating
// points of the threshold sweep (accept when score >= threshold).
double compute_eer(const TrialScores& scores);

// Minimum over thresholds of the detection cost normalized by the cost of
// the better trivial system.
double compute_min_dcf(const TrialScores& scores, const DcfParams& params);

MetricsReport evaluate(const TrialScores& scores);

struct Trajectory {
  std::vector<double> weights;      // alpha_t, or max over heads for multihead
  pooling::AttentionRecord record;  // heads x T
};

// Throws UnsupportedError for statistics pooling models.
Trajectory attention_trajectory(model::Model& model, const Matrix& features);
void write_trajectory_tsv(const Trajectory& trajectory, std::ostream& os);

// Spearman rank correlation with average ranks for ties; 0 when either
// side is constant.
double spearman(std::span<const double> a, std::span<const double> b);

// Mean over utterances of spearman(weights, gate).
double gate_correlation(std::span<const std::vector<double>> weights,
                        std::span<const std::vector<std::uint8_t>> gates);

// Enrollment lists plus all (speaker, test utterance) trials of a held-out
// set: the first `enroll_per_speaker` utterances of each speaker enroll it,
// the remaining ones are tests against every speaker.
struct TrialList {
  std::map<std::string, std::vector<std::string>> enroll;
  std::vector<Trial> trials;
};
TrialList make_trials(const data::Dataset& dataset, std::size_t enroll_per_speaker);

// --------------------------------------------------------------- file I/O
// enroll.tsv:     "spk<TAB>utt1 utt2 ..."
// trials.tsv:     "enroll_spk<TAB>test_utt<TAB>target|nontarget"
// embeddings.tsv: "utt<TAB>v1 v2 ..."
// scores.tsv:     "enroll<TAB>test<TAB>score"

void write_enroll(const std::map<std::string, std::vector<std::string>>& enroll,
                  const std::filesystem::path& path);
std::map<std::string, std::vector<std::string>> read_enroll(const std::filesystem::path& path);

void write_trials(std::span<const Trial> trials, const std::filesystem::path& path);
// An enroll field missing from `enroll` is read as a comma-separated list of
// utterance ids.
std::vector<Trial> read_trials(const std::filesystem::path& path,
                               const std::map<std::string, std::vector<std::string>>& enroll = {});

void write_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);
EmbeddingTable read_embeddings(const std::filesystem::path& path);

void write_scores(const TrialScores& scores, const std::filesystem::path& path);
// Joins a scores file with the labels of `trials` on (enroll, test).
TrialScores read_scores(const std::filesystem::path& path, std::span<const Trial> trials);

}  // namespace xvec::eval
