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

#include "xvec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "xvec/error.hpp"

namespace xvec::eval {
namespace {

struct OperatingPoint {
  double p_miss;
  double p_fa;
};

// Sweeps the threshold upwards through every distinct score. The first
// point accepts everything and the last rejects everything; tied scores
// move together.
std::vector<OperatingPoint> sweep(const TrialScores& s) {
  s.validate();
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.scores[a] < s.scores[b]; });
  const double nt = static_cast<double>(s.num_targets());
  const double nn = static_cast<double>(s.num_nontargets());
  std::size_t misses = 0;
  std::size_t false_alarms = s.num_nontargets();
  std::vector<OperatingPoint> points{{0.0, 1.0}};
  for (std::size_t i = 0; i < order.size();) {
    const double v = s.scores[order[i]];
    for (; i < order.size() && s.scores[order[i]] == v; ++i) {
      if (s.target[order[i]]) {
        ++misses;
      } else {
        --false_alarms;
      }
    }
    points.push_back({static_cast<double>(misses) / nt, static_cast<double>(false_alarms) / nn});
  }
  return points;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

std::vector<std::string> split_on(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(text);
  while (std::getline(is, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  return f;
}

double parse_double(const std::string& text, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw DataError(where + ": not a number: \"" + text + "\"");
  }
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j - 1);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

}  // namespace

std::size_t TrialScores::num_targets() const {
  return static_cast<std::size_t>(std::count(target.begin(), target.end(), true));
}

void TrialScores::validate() const {
  if (scores.size() != target.size()) throw DataError("trial scores: label count mismatch");
  if (num_targets() == 0) throw DataError("trial scores: no target trials");
  if (num_nontargets() == 0) throw DataError("trial scores: no nontarget trials");
  for (double s : scores) {
    if (!std::isfinite(s)) throw DataError("trial scores: non-finite score");
  }
}

Json MetricsReport::to_json() const {
  return Json{{"eer", eer},
              {"min_dcf08", min_dcf08},
              {"min_dcf10", min_dcf10},
              {"num_targets", targets},
              {"num_nontargets", nontargets}};
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DataError("cosine: dimension mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

TrialScores score_trials(const EmbeddingTable& embeddings, std::span<const Trial> trials) {
  auto lookup = [&](const std::string& id) -> const std::vector<double>& {
    auto it = embeddings.find(id);
    if (it == embeddings.end()) throw DataError("no embedding for utterance id \"" + id + "\"");
    return it->second;
  };
  TrialScores out;
  for (const auto& trial : trials) {
    if (trial.enroll.empty()) throw DataError("trial for " + trial.enroll_name + " has no enrollment");
    std::vector<double> model(lookup(trial.enroll.front()).size(), 0.0);
    for (const auto& id : trial.enroll) {
      const auto& e = lookup(id);
      if (e.size() != model.size()) throw DataError("embedding dimension mismatch for " + id);
      for (std::size_t i = 0; i < e.size(); ++i) model[i] += e[i];
    }
    double norm = 0.0;
    for (double v : model) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (double& v : model) v /= norm;
    }
    out.add(cosine_similarity(model, lookup(trial.test)), trial.target);
    out.enroll_names.push_back(trial.enroll_name);
    out.test_ids.push_back(trial.test);
  }
  return out;
}

double compute_eer(const TrialScores& scores) {
  const auto points = sweep(scores);
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double d1 = points[i].p_miss - points[i].p_fa;
    if (d1 < 0.0) continue;
    const auto& a = points[i - 1];
    const auto& b = points[i];
    const double d0 = a.p_miss - a.p_fa;
    const double lambda = -d0 / (d1 - d0);
    return a.p_miss + lambda * (b.p_miss - a.p_miss);
  }
  return 0.0;  // unreachable: the last point is (1, 0)
}

double compute_min_dcf(const TrialScores& scores, const DcfParams& params) {
  const double norm = std::min(params.c_miss * params.p_target, params.c_fa * (1.0 - params.p_target));
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : sweep(scores)) {
    const double cost = params.c_miss * p.p_miss * params.p_target + params.c_fa * p.p_fa * (1.0 - params.p_target);
    best = std::min(best, cost / norm);
  }
  return best;
}

MetricsReport evaluate(const TrialScores& scores) {
  MetricsReport r;
  r.eer = compute_eer(scores);
  r.min_dcf08 = compute_min_dcf(scores, kSre08);
  r.min_dcf10 = compute_min_dcf(scores, kSre10);
  r.targets = scores.num_targets();
  r.nontargets = scores.num_nontargets();
  return r;
}

Trajectory attention_trajectory(model::Model& model, const Matrix& features) {
  if (model.config().pooling == model::PoolingKind::kStats) {
    throw UnsupportedError("attention trajectory needs an attention or multihead pooling model");
  }
  model::ForwardTrace trace = model.forward(features, nn::Mode::kInfer);
  Trajectory t;
  t.record = std::move(trace.attention.at(0));
  t.weights = t.record.max_over_heads();
  return t;
}

void write_trajectory_tsv(const Trajectory& trajectory, std::ostream& os) {
  for (std::size_t t = 0; t < trajectory.weights.size(); ++t) {
    os << t << '\t' << format_double(trajectory.weights[t]) << '\n';
  }
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DataError("spearman: length mismatch");
  if (a.size() < 2) return 0.0;
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

double gate_correlation(std::span<const std::vector<double>> weights,
                        std::span<const std::vector<std::uint8_t>> gates) {
  if (weights.size() != gates.size()) throw DataError("gate_correlation: utterance count mismatch");
  if (weights.empty()) throw DataError("gate_correlation: no utterances");
  double sum = 0.0;
  for (std::size_t u = 0; u < weights.size(); ++u) {
    if (weights[u].size() != gates[u].size()) {
      throw DataError("gate_correlation: utterance " + std::to_string(u) + " has " +
                      std::to_string(weights[u].size()) + " weights but " + std::to_string(gates[u].size()) +
                      " gate flags");
    }
    std::vector<double> g(gates[u].begin(), gates[u].end());
    sum += spearman(weights[u], g);
  }
  return sum / static_cast<double>(weights.size());
}

TrialList make_trials(const data::Dataset& dataset, std::size_t enroll_per_speaker) {
  if (enroll_per_speaker == 0) throw ConfigError("enroll_per_speaker: must be positive");
  TrialList list;
  std::vector<std::vector<const data::Utterance*>> by_speaker(dataset.num_speakers());
  for (const auto& u : dataset.utterances) by_speaker.at(u.speaker).push_back(&u);
  std::vector<const data::Utterance*> tests;
  for (std::size_t k = 0; k < by_speaker.size(); ++k) {
    if (by_speaker[k].size() <= enroll_per_speaker) {
      throw DataError("speaker " + dataset.speakers[k] + " has too few utterances to enroll and test");
    }
    auto& ids = list.enroll[dataset.speakers[k]];
    for (std::size_t i = 0; i < by_speaker[k].size(); ++i) {
      if (i < enroll_per_speaker) {
        ids.push_back(by_speaker[k][i]->id);
      } else {
        tests.push_back(by_speaker[k][i]);
      }
    }
  }
  for (std::size_t k = 0; k < by_speaker.size(); ++k) {
    const std::string& spk = dataset.speakers[k];
    for (const auto* t : tests) list.trials.push_back({spk, list.enroll[spk], t->id, t->speaker == k});
  }
  return list;
}

// ---------------------------------------------------------------- file I/O

void write_enroll(const std::map<std::string, std::vector<std::string>>& enroll,
                  const std::filesystem::path& path) {
  auto f = open_out(path);
  for (const auto& [spk, utts] : enroll) {
    f << spk << '\t';
    for (std::size_t i = 0; i < utts.size(); ++i) f << (i ? " " : "") << utts[i];
    f << '\n';
  }
}

std::map<std::string, std::vector<std::string>> read_enroll(const std::filesystem::path& path) {
  auto f = open_in(path);
  std::map<std::string, std::vector<std::string>> out;
  std::string line;
  for (std::size_t n = 1; std::getline(f, line); ++n) {
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 2) throw DataError(path.string() + ":" + std::to_string(n) + ": expected spk<TAB>utts");
    out[fields[0]] = split_on(fields[1], ' ');
  }
  return out;
}

void write_trials(std::span<const Trial> trials, const std::filesystem::path& path) {
  auto f = open_out(path);
  for (const auto& t : trials) f << t.enroll_name << '\t' << t.test << '\t' << (t.target ? "target" : "nontarget") << '\n';
}

std::vector<Trial> read_trials(const std::filesystem::path& path,
                               const std::map<std::string, std::vector<std::string>>& enroll) {
  auto f = open_in(path);
  std::vector<Trial> out;
  std::string line;
  for (std::size_t n = 1; std::getline(f, line); ++n) {
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(n);
    auto fields = split_tabs(line);
    if (fields.size() != 3) throw DataError(where + ": expected enroll<TAB>test<TAB>target|nontarget");
    Trial t;
    t.enroll_name = fields[0];
    if (auto it = enroll.find(fields[0]); it != enroll.end()) {
      t.enroll = it->second;
    } else {
      t.enroll = split_on(fields[0], ',');
    }
    t.test = fields[1];
    if (fields[2] == "target") {
      t.target = true;
    } else if (fields[2] != "nontarget") {
      throw DataError(where + ": label must be target or nontarget, got \"" + fields[2] + "\"");
    }
    out.push_back(std::move(t));
  }
  return out;
}

void write_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
  auto f = open_out(path);
  for (const auto& [id, v] : table) {
    f << id << '\t';
    for (std::size_t i = 0; i < v.size(); ++i) f << (i ? " " : "") << format_double(v[i]);
    f << '\n';
  }
}

EmbeddingTable read_embeddings(const std::filesystem::path& path) {
  auto f = open_in(path);
  EmbeddingTable table;
  std::string line;
  for (std::size_t n = 1; std::getline(f, line); ++n) {
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(n);
    auto fields = split_tabs(line);
    if (fields.size() != 2) throw DataError(where + ": expected utt<TAB>values");
    std::vector<double> v;
    for (const auto& tok : split_on(fields[1], ' ')) v.push_back(parse_double(tok, where));
    if (v.empty()) throw DataError(where + ": empty embedding");
    table[fields[0]] = std::move(v);
  }
  return table;
}

void write_scores(const TrialScores& scores, const std::filesystem::path& path) {
  if (scores.enroll_names.size() != scores.size() || scores.test_ids.size() != scores.size()) {
    throw UsageError("write_scores: scores carry no trial identifiers");
  }
  auto f = open_out(path);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    f << scores.enroll_names[i] << '\t' << scores.test_ids[i] << '\t' << format_double(scores.scores[i]) << '\n';
  }
}

TrialScores read_scores(const std::filesystem::path& path, std::span<const Trial> trials) {
  std::map<std::pair<std::string, std::string>, bool> labels;
  for (const auto& t : trials) labels[{t.enroll_name, t.test}] = t.target;
  auto f = open_in(path);
  TrialScores out;
  std::string line;
  for (std::size_t n = 1; std::getline(f, line); ++n) {
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(n);
    auto fields = split_tabs(line);
    if (fields.size() != 3) throw DataError(where + ": expected enroll<TAB>test<TAB>score");
    auto it = labels.find({fields[0], fields[1]});
    if (it == labels.end()) throw DataError(where + ": trial " + fields[0] + "/" + fields[1] + " not in trial list");
    out.add(parse_double(fields[2], where), it->second);
    out.enroll_names.push_back(fields[0]);
    out.test_ids.push_back(fields[1]);
  }
  return out;
}

}  // namespace xvec::eval
