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

#include "xvec/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "xvec/error.hpp"

namespace xvec::data {
namespace {

constexpr char kFeatureMagic[4] = {'X', 'V', 'F', '1'};
constexpr std::size_t kHeaderBytes = 12;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  }
  return v;
}

std::string numbered(const std::string& prefix, const char* kind, std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%03zu", kind, n);
  return prefix + buf;
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

std::string slurp(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

// ---------------------------------------------------------- SynthConfig

void SynthConfig::validate() const {
  if (num_speakers < 2) throw ConfigError("synth.num_speakers: at least 2 speakers are required");
  if (utts_per_speaker < 1) throw ConfigError("synth.utts_per_speaker: must be positive");
  if (min_frames < 10) throw ConfigError("synth.min_frames: must be at least 10");
  if (max_frames < min_frames) throw ConfigError("synth.max_frames: must be >= min_frames");
  if (dim < 1) throw ConfigError("synth.dim: must be positive");
  if (!(p_stay_on > 0.0 && p_stay_on < 1.0)) throw ConfigError("synth.p_stay_on: must be in (0,1)");
  if (!(p_stay_off > 0.0 && p_stay_off < 1.0)) throw ConfigError("synth.p_stay_off: must be in (0,1)");
  if (!(noise_sigma > 0.0)) throw ConfigError("synth.noise_sigma: must be positive");
  if (!std::isfinite(scale)) throw ConfigError("synth.scale: must be finite");
}

double SynthConfig::stationary_on() const {
  const double to_on = 1.0 - p_stay_off;
  const double to_off = 1.0 - p_stay_on;
  return to_on / (to_on + to_off);
}

Json to_json(const SynthConfig& c) {
  return Json{{"num_speakers", c.num_speakers}, {"utts_per_speaker", c.utts_per_speaker},
              {"min_frames", c.min_frames},     {"max_frames", c.max_frames},
              {"dim", c.dim},                   {"p_stay_on", c.p_stay_on},
              {"p_stay_off", c.p_stay_off},     {"scale", c.scale},
              {"noise_sigma", c.noise_sigma},   {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const Json& j, SynthConfig c) {
  const std::string ctx = "synth";
  require_known_keys(j,
                     {"num_speakers", "utts_per_speaker", "min_frames", "max_frames", "dim",
                      "p_stay_on", "p_stay_off", "scale", "noise_sigma", "seed"},
                     ctx);
  read_field(j, "num_speakers", c.num_speakers, ctx);
  read_field(j, "utts_per_speaker", c.utts_per_speaker, ctx);
  read_field(j, "min_frames", c.min_frames, ctx);
  read_field(j, "max_frames", c.max_frames, ctx);
  read_field(j, "dim", c.dim, ctx);
  read_field(j, "p_stay_on", c.p_stay_on, ctx);
  read_field(j, "p_stay_off", c.p_stay_off, ctx);
  read_field(j, "scale", c.scale, ctx);
  read_field(j, "noise_sigma", c.noise_sigma, ctx);
  read_field(j, "seed", c.seed, ctx);
  return c;
}

const Utterance* Dataset::find(std::string_view id) const {
  for (const auto& u : utterances) {
    if (u.id == id) return &u;
  }
  return nullptr;
}

Dataset gen_synthetic(const SynthConfig& config, Split split, const std::string& prefix) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> length(config.min_frames, config.max_frames);

  Dataset ds;
  ds.split = split;
  std::vector<std::vector<double>> identity(config.num_speakers, std::vector<double>(config.dim));
  for (std::size_t k = 0; k < config.num_speakers; ++k) {
    ds.speakers.push_back(numbered(prefix, "spk", k));
    for (double& v : identity[k]) v = normal(rng);
  }
  for (std::size_t k = 0; k < config.num_speakers; ++k) {
    for (std::size_t u = 0; u < config.utts_per_speaker; ++u) {
      const std::size_t frames = length(rng);
      Utterance utt;
      utt.id = ds.speakers[k] + numbered("-", "utt", u);
      utt.speaker = k;
      utt.features = Matrix(frames, config.dim);
      std::vector<std::uint8_t> gate(frames);
      bool on = unit(rng) < config.stationary_on();
      for (std::size_t t = 0; t < frames; ++t) {
        if (t > 0) on = unit(rng) < (on ? config.p_stay_on : 1.0 - config.p_stay_off);
        gate[t] = on ? 1 : 0;
        const double g = on ? config.scale : 0.0;
        for (std::size_t j = 0; j < config.dim; ++j) {
          utt.features(t, j) = g * identity[k][j] + config.noise_sigma * normal(rng);
        }
      }
      utt.gate = std::move(gate);
      ds.utterances.push_back(std::move(utt));
    }
  }
  return ds;
}

// --------------------------------------------------------- feature files

std::string encode_features(const Matrix& features) {
  if (!features.all_finite()) throw DataError("write_features: non-finite feature value");
  std::string out(kFeatureMagic, 4);
  out.reserve(kHeaderBytes + 4 * features.size());
  put_u32(out, static_cast<std::uint32_t>(features.rows()));
  put_u32(out, static_cast<std::uint32_t>(features.cols()));
  for (double v : features.flat()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

Matrix decode_features(std::string_view bytes) {
  if (bytes.size() < 4) throw FormatError("feature file too short for magic", bytes.size());
  if (bytes.substr(0, 4) != std::string_view(kFeatureMagic, 4)) {
    throw FormatError("bad feature magic (expected XVF1)", 0);
  }
  if (bytes.size() < kHeaderBytes) throw FormatError("feature header truncated", bytes.size());
  const std::uint32_t frames = get_u32(bytes, 4);
  const std::uint32_t dim = get_u32(bytes, 8);
  if (frames == 0 || dim == 0) throw FormatError("feature matrix has a zero dimension", 4);
  const std::uint64_t expected = static_cast<std::uint64_t>(frames) * dim;
  const std::uint64_t available = (bytes.size() - kHeaderBytes) / 4;
  if (available < expected) {
    throw FormatError("feature data truncated: header promises " + std::to_string(expected) +
                          " floats, found " + std::to_string(available),
                      kHeaderBytes + 4 * available);
  }
  if (bytes.size() != kHeaderBytes + 4 * expected) {
    throw FormatError("trailing bytes after feature data", kHeaderBytes + 4 * expected);
  }
  Matrix m(frames, dim);
  auto flat = m.flat();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const float v = std::bit_cast<float>(get_u32(bytes, kHeaderBytes + 4 * i));
    if (!std::isfinite(v)) throw FormatError("non-finite feature value", kHeaderBytes + 4 * i);
    flat[i] = v;
  }
  return m;
}

void write_features(const Matrix& features, const std::filesystem::path& path) {
  const std::string bytes = encode_features(features);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing " + path.string());
}

Matrix read_features(const std::filesystem::path& path) {
  try {
    return decode_features(slurp(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

// ------------------------------------------------------------- manifests

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "feats", ec);
  if (ec) throw IoError("cannot create " + (dir / "feats").string() + ": " + ec.message());
  std::ofstream manifest(dir / "manifest.tsv", std::ios::trunc);
  if (!manifest) throw IoError("cannot write " + (dir / "manifest.tsv").string());
  bool any_gate = false;
  for (const auto& u : dataset.utterances) {
    const std::string rel = "feats/" + u.id + ".xvf";
    write_features(u.features, dir / rel);
    manifest << u.id << '\t' << dataset.speakers.at(u.speaker) << '\t' << rel << '\n';
    any_gate = any_gate || u.gate.has_value();
  }
  if (!manifest) throw IoError("failed writing manifest in " + dir.string());
  if (!any_gate) return;
  std::ofstream gates(dir / "gates.tsv", std::ios::trunc);
  if (!gates) throw IoError("cannot write " + (dir / "gates.tsv").string());
  for (const auto& u : dataset.utterances) {
    if (!u.gate) continue;
    gates << u.id << '\t';
    for (auto g : *u.gate) gates << (g ? '1' : '0');
    gates << '\n';
  }
}

Dataset read_dataset(const std::filesystem::path& dir, Split split) {
  const auto manifest_path = dir / "manifest.tsv";
  std::ifstream manifest(manifest_path);
  if (!manifest) throw IoError("cannot open " + manifest_path.string());
  Dataset ds;
  ds.split = split;
  std::map<std::string, std::size_t> speaker_index;
  std::map<std::string, std::size_t> utt_index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 3) {
      throw DataError(manifest_path.string() + ":" + std::to_string(line_no) +
                      ": expected utt<TAB>speaker<TAB>path");
    }
    auto [it, inserted] = speaker_index.emplace(fields[1], ds.speakers.size());
    if (inserted) ds.speakers.push_back(fields[1]);
    if (!utt_index.emplace(fields[0], ds.utterances.size()).second) {
      throw DataError(manifest_path.string() + ":" + std::to_string(line_no) +
                      ": duplicate utterance id " + fields[0]);
    }
    Utterance u;
    u.id = fields[0];
    u.speaker = it->second;
    u.features = read_features(dir / fields[2]);
    ds.utterances.push_back(std::move(u));
  }
  const auto gates_path = dir / "gates.tsv";
  if (!std::filesystem::exists(gates_path)) return ds;
  std::ifstream gates(gates_path);
  line_no = 0;
  while (std::getline(gates, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    const std::string where = gates_path.string() + ":" + std::to_string(line_no);
    if (fields.size() != 2) throw DataError(where + ": expected utt<TAB>gate");
    auto it = utt_index.find(fields[0]);
    if (it == utt_index.end()) throw DataError(where + ": unknown utterance " + fields[0]);
    Utterance& u = ds.utterances[it->second];
    if (fields[1].size() != u.features.rows()) {
      throw DataError(where + ": gate length " + std::to_string(fields[1].size()) + " != frames " +
                      std::to_string(u.features.rows()));
    }
    std::vector<std::uint8_t> gate(fields[1].size());
    for (std::size_t t = 0; t < gate.size(); ++t) {
      if (fields[1][t] != '0' && fields[1][t] != '1') throw DataError(where + ": gate must be 0/1");
      gate[t] = fields[1][t] == '1';
    }
    u.gate = std::move(gate);
  }
  return ds;
}

// -------------------------------------------------------------- batching

Matrix cut_chunk(const Matrix& features, std::size_t start, std::size_t len) {
  Matrix out(len, features.cols());
  for (std::size_t i = 0; i < len; ++i) {
    const std::size_t src = std::min(start + i, features.rows() - 1);
    std::copy(features.row(src).begin(), features.row(src).end(), out.row(i).begin());
  }
  return out;
}

BatchStream::BatchStream(const Dataset& dataset, std::size_t chunk_len, std::size_t batch_size,
                         std::uint64_t seed)
    : dataset_(&dataset), chunk_len_(chunk_len), batch_size_(batch_size), rng_(seed) {
  if (chunk_len == 0) throw ConfigError("chunk_len: must be positive");
  if (batch_size == 0) throw ConfigError("batch_size: must be positive");
  if (dataset.utterances.empty()) throw DataError("batching: dataset has no utterances");
}

std::vector<Batch> BatchStream::next_epoch() {
  std::vector<std::size_t> order(dataset_->utterances.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng_);
  std::vector<Batch> batches;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i % batch_size_ == 0) {
      const bool merge_tail = i + 1 == order.size() && !batches.empty();
      if (!merge_tail) batches.emplace_back();
    }
    const Utterance& u = dataset_->utterances[order[i]];
    const std::size_t frames = u.features.rows();
    std::size_t start = 0;
    if (frames > chunk_len_) {
      std::uniform_int_distribution<std::size_t> pick(0, frames - chunk_len_);
      start = pick(rng_);
    }
    Batch& b = batches.back();
    b.features.push_back(cut_chunk(u.features, start, chunk_len_));
    b.labels.push_back(u.speaker);
    b.utterances.push_back(order[i]);
    b.padded.push_back(frames < chunk_len_);
  }
  return batches;
}

std::vector<Batch> make_batches(const Dataset& dataset, std::size_t chunk_len, std::size_t batch_size,
                                std::uint64_t seed) {
  return BatchStream(dataset, chunk_len, batch_size, seed).next_epoch();
}

}  // namespace xvec::data
