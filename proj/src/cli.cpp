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

#include "xvec/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "xvec/error.hpp"
#include "xvec/eval.hpp"

namespace xvec::cli {
namespace {

namespace fs = std::filesystem;

// Flags shared by several subcommands; unset optionals leave the config alone.
struct ModelFlags {
  std::optional<std::string> pooling;
  std::optional<std::size_t> key_layer;
  std::optional<std::string> compat;
  std::optional<std::size_t> heads;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--pooling", pooling, "stats|att|multihead");
    cmd->add_option("--key-layer", key_layer, "frame layer feeding the attention keys (att-x)");
    cmd->add_option("--compat", compat, "compatibility net widths, e.g. 500 or 100-500");
    cmd->add_option("--heads", heads, "number of heads for multihead pooling");
  }

  void apply(model::ModelConfig& m) const {
    if (pooling) m.pooling = model::parse_pooling_kind(*pooling);
    if (key_layer) m.key_layer = *key_layer;
    if (compat) m.compat_hidden = parse_compat(*compat);
    if (heads) m.heads = *heads;
  }
};

RunConfig config_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : load_run_config(path);
}

fs::path train_dir(const fs::path& data) {
  return fs::exists(data / "train" / "manifest.tsv") ? data / "train" : data;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw IoError("failed writing " + path.string());
}

void cmd_gen_data(const RunConfig& cfg, const fs::path& out_dir, std::ostream& out) {
  data::Dataset train_set = data::gen_synthetic(cfg.synth, data::Split::kTrain);
  data::write_dataset(train_set, out_dir / "train");
  Json summary{{"train", {{"speakers", train_set.num_speakers()}, {"utterances", train_set.utterances.size()}}}};
  if (cfg.heldout.num_speakers > 0) {
    data::Dataset heldout = data::gen_synthetic(heldout_synth(cfg), data::Split::kEval, "ho-");
    data::write_dataset(heldout, out_dir / "heldout");
    eval::TrialList trials = eval::make_trials(heldout, cfg.heldout.enroll_per_speaker);
    eval::write_enroll(trials.enroll, out_dir / "heldout" / "enroll.tsv");
    eval::write_trials(trials.trials, out_dir / "heldout" / "trials.tsv");
    summary["heldout"] = {{"speakers", heldout.num_speakers()},
                          {"utterances", heldout.utterances.size()},
                          {"trials", trials.trials.size()}};
  }
  write_text(out_dir / "config.json", to_json(cfg).dump(2) + "\n");
  out << summary.dump() << '\n';
}

void cmd_train(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out_model, std::ostream& out) {
  data::Dataset ds = data::read_dataset(train_dir(data_dir));
  std::ofstream log(out_model.string() + ".log.jsonl", std::ios::trunc);
  if (!log) throw IoError("cannot write training log next to " + out_model.string());
  train::TrainOptions options;
  options.log = &log;
  options.checkpoint_dir = fs::path(out_model.string() + ".epochs");
  options.on_epoch = [&](std::size_t epoch, double acc, double loss) {
    out << Json{{"epoch", epoch}, {"train_accuracy", acc}, {"mean_loss", loss}}.dump() << '\n';
  };
  train::TrainResult result = train::train(cfg.model, ds, cfg.train, options);
  result.model.save(out_model);
  const double final_loss = result.report.step_losses.back();
  if (!std::isfinite(final_loss)) throw NumericError("final loss is not finite");
  out << Json{{"model", out_model.string()},
              {"final_loss", final_loss},
              {"train_accuracy", result.report.epoch_accuracy.back()},
              {"wall_seconds", result.report.wall_seconds}}
             .dump()
      << '\n';
}

void cmd_extract(const fs::path& model_path, const fs::path& data_dir, const fs::path& out_path,
                 std::ostream& out) {
  model::Model m = model::Model::load(model_path);
  data::Dataset ds = data::read_dataset(data_dir);
  eval::EmbeddingTable table;
  for (const auto& u : ds.utterances) table[u.id] = m.extract_embedding(u.features, u.id).vector;
  eval::write_embeddings(table, out_path);
  out << Json{{"embeddings", table.size()}, {"dim", m.config().embedding_dim()}}.dump() << '\n';
}

std::map<std::string, std::vector<std::string>> enroll_for(const fs::path& trials, const std::string& flag) {
  if (!flag.empty()) return eval::read_enroll(flag);
  const fs::path sibling = trials.parent_path() / "enroll.tsv";
  return fs::exists(sibling) ? eval::read_enroll(sibling) : std::map<std::string, std::vector<std::string>>{};
}

void cmd_score(const fs::path& emb_path, const fs::path& trials_path, const std::string& enroll_path,
               const fs::path& out_path, std::ostream& out) {
  auto table = eval::read_embeddings(emb_path);
  auto trials = eval::read_trials(trials_path, enroll_for(trials_path, enroll_path));
  eval::TrialScores scores = eval::score_trials(table, trials);
  eval::write_scores(scores, out_path);
  out << Json{{"trials", scores.size()}}.dump() << '\n';
}

// "p_target,c_miss,c_fa"
eval::DcfParams parse_dcf(const std::string& text) {
  eval::DcfParams p{};
  char c1 = 0, c2 = 0;
  std::istringstream in(text);
  if (!(in >> p.p_target >> c1 >> p.c_miss >> c2 >> p.c_fa) || c1 != ',' || c2 != ',' || !(in >> std::ws).eof()) {
    throw ConfigError("--dcf: expected p_target,c_miss,c_fa, got '" + text + "'");
  }
  if (!(p.p_target > 0.0 && p.p_target < 1.0) || !(p.c_miss > 0.0) || !(p.c_fa > 0.0)) {
    throw ConfigError("--dcf: need 0 < p_target < 1 and positive costs, got '" + text + "'");
  }
  return p;
}

void cmd_eval(const fs::path& scores_path, const fs::path& trials_path, const std::string& out_path,
              const std::vector<std::string>& extra_dcf, std::ostream& out) {
  std::vector<eval::DcfParams> extra;
  for (const auto& d : extra_dcf) extra.push_back(parse_dcf(d));
  auto trials = eval::read_trials(trials_path);
  eval::TrialScores scores = eval::read_scores(scores_path, trials);
  Json report = eval::evaluate(scores).to_json();
  if (!extra.empty()) {
    Json list = Json::array();
    for (const auto& p : extra) {
      list.push_back({{"p_target", p.p_target},
                      {"c_miss", p.c_miss},
                      {"c_fa", p.c_fa},
                      {"min_dcf", eval::compute_min_dcf(scores, p)}});
    }
    report["min_dcf_extra"] = list;
  }
  const std::string text = report.dump() + "\n";
  if (!out_path.empty()) write_text(out_path, text);
  out << text;
}

void cmd_attn(const fs::path& model_path, const fs::path& utt_path, const fs::path& out_path, std::ostream& out) {
  model::Model m = model::Model::load(model_path);
  if (m.config().pooling == model::PoolingKind::kStats) {
    throw UnsupportedError("model " + model_path.string() + " uses statistics pooling; no attention weights");
  }
  eval::Trajectory t = eval::attention_trajectory(m, data::read_features(utt_path));
  std::ostringstream tsv;
  eval::write_trajectory_tsv(t, tsv);
  write_text(out_path, tsv.str());
  std::ostringstream heads;
  for (std::size_t f = 0; f < t.record.frames(); ++f) {
    heads << f;
    for (std::size_t h = 0; h < t.record.heads(); ++h) {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "\t%.17g", t.record.weights(h, f));
      heads << buf;
    }
    heads << '\n';
  }
  write_text(out_path.string() + ".heads.tsv", heads.str());
  out << Json{{"frames", t.record.frames()}, {"heads", t.record.heads()}}.dump() << '\n';
}

bool cmd_gradcheck(const std::string& config_path, std::uint64_t seed, std::ostream& out) {
  model::ModelConfig mc = model::ModelConfig::tiny(model::PoolingKind::kMultiHead);
  if (!config_path.empty()) mc = load_run_config(config_path).model;
  train::GradcheckReport report = train::gradcheck_model(mc, seed);
  Json j = report.to_json();
  j["tolerance"] = train::kGradcheckTolerance;
  j["passed"] = report.passed();
  out << j.dump() << '\n';
  return report.passed();
}

}  // namespace

Json to_json(const RunConfig& c) {
  return Json{{"model", model::to_json(c.model)},
              {"synth", data::to_json(c.synth)},
              {"heldout",
               {{"num_speakers", c.heldout.num_speakers},
                {"utts_per_speaker", c.heldout.utts_per_speaker},
                {"enroll_per_speaker", c.heldout.enroll_per_speaker}}},
              {"train", train::to_json(c.train)},
              {"paths", {{"data", c.paths.data}, {"model", c.paths.model}, {"out", c.paths.out}}}};
}

RunConfig run_config_from_json(const Json& j) {
  require_known_keys(j, {"model", "synth", "heldout", "train", "paths"}, "config");
  RunConfig c;
  if (j.contains("model")) c.model = model::model_config_from_json(j["model"], c.model);
  if (j.contains("synth")) c.synth = data::synth_config_from_json(j["synth"], c.synth);
  if (j.contains("heldout")) {
    const Json& h = j["heldout"];
    require_known_keys(h, {"num_speakers", "utts_per_speaker", "enroll_per_speaker"}, "heldout");
    read_field(h, "num_speakers", c.heldout.num_speakers, "heldout");
    read_field(h, "utts_per_speaker", c.heldout.utts_per_speaker, "heldout");
    read_field(h, "enroll_per_speaker", c.heldout.enroll_per_speaker, "heldout");
  }
  if (j.contains("train")) c.train = train::hyperparams_from_json(j["train"], c.train);
  if (j.contains("paths")) {
    const Json& p = j["paths"];
    require_known_keys(p, {"data", "model", "out"}, "paths");
    read_field(p, "data", c.paths.data, "paths");
    read_field(p, "model", c.paths.model, "paths");
    read_field(p, "out", c.paths.out, "paths");
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path.string());
  Json j;
  try {
    j = Json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

data::SynthConfig heldout_synth(const RunConfig& config) {
  data::SynthConfig s = config.synth;
  s.num_speakers = config.heldout.num_speakers;
  s.utts_per_speaker = config.heldout.utts_per_speaker;
  s.seed = config.synth.seed * 0x9E3779B97F4A7C15ULL + 0x5851F42D4C957F2DULL;
  return s;
}

std::vector<std::size_t> parse_compat(const std::string& text) {
  std::vector<std::size_t> widths;
  std::istringstream is(text);
  std::string part;
  while (std::getline(is, part, '-')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(part, &used);
      if (used != part.size() || v <= 0) throw std::invalid_argument(part);
      widths.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("--compat: expected widths like 500 or 100-500, got \"" + text + "\"");
    }
  }
  if (widths.empty()) throw ConfigError("--compat: no widths given");
  if (text.back() == '-') throw ConfigError("--compat: trailing '-' in \"" + text + "\"");
  return widths;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"x-vector speaker embeddings with statistics, attention and multi-head attention pooling"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir, data_dir, out_model, model_path, out_path, emb_path, trials_path, enroll_path;
  std::string scores_path, utt_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  ModelFlags model_flags;

  auto* gen = app.add_subcommand("gen-data", "write a synthetic train/held-out dataset");
  gen->add_option("--config", config_path, "run config JSON");
  gen->add_option("--out-dir", out_dir, "output directory")->required();
  gen->add_option("--seed", seed, "overrides synth.seed");

  auto* trn = app.add_subcommand("train", "train a model on a dataset directory");
  trn->add_option("--config", config_path, "run config JSON");
  trn->add_option("--data", data_dir, "dataset directory (uses <dir>/train when present)")->required();
  trn->add_option("--out-model", out_model, "checkpoint to write")->required();
  trn->add_option("--seed", seed, "overrides train.seed");
  trn->add_option("--epochs", epochs, "overrides train.epochs");
  model_flags.add_to(trn);

  auto* ext = app.add_subcommand("extract", "extract embeddings for every utterance of a dataset");
  ext->add_option("--model", model_path, "checkpoint")->required();
  ext->add_option("--data", data_dir, "dataset directory")->required();
  ext->add_option("--out", out_path, "embeddings TSV")->required();

  auto* scr = app.add_subcommand("score", "cosine-score a trial list");
  scr->add_option("--embeddings", emb_path, "embeddings TSV")->required();
  scr->add_option("--trials", trials_path, "trial list")->required();
  scr->add_option("--enroll", enroll_path, "speaker enrollment list (default: enroll.tsv beside trials)");
  scr->add_option("--out", out_path, "scores TSV")->required();

  auto* evl = app.add_subcommand("eval", "EER, minDCF08 and minDCF10 of a scores file");
  evl->add_option("--scores", scores_path, "scores TSV")->required();
  evl->add_option("--trials", trials_path, "trial list with target/nontarget labels")->required();
  evl->add_option("--out", out_path, "metrics JSON");
  std::vector<std::string> extra_dcf;
  evl->add_option("--dcf", extra_dcf, "extra operating point p_target,c_miss,c_fa (repeatable)");

  auto* att = app.add_subcommand("attn", "export the attention weight trajectory of one utterance");
  att->add_option("--model", model_path, "checkpoint")->required();
  att->add_option("--utt", utt_path, "feature file (.xvf)")->required();
  att->add_option("--out", out_path, "trajectory TSV")->required();

  auto* grc = app.add_subcommand("gradcheck", "finite-difference gradient check of a small model");
  grc->add_option("--config", config_path, "run config JSON (default: built-in tiny model)");
  grc->add_option("--seed", seed, "initialization and data seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      RunConfig cfg = config_or_default(config_path);
      if (seed) cfg.synth.seed = *seed;
      cmd_gen_data(cfg, out_dir, out);
    } else if (trn->parsed()) {
      RunConfig cfg = config_or_default(config_path);
      if (seed) cfg.train.seed = *seed;
      if (epochs) cfg.train.epochs = *epochs;
      model_flags.apply(cfg.model);
      cmd_train(cfg, data_dir, out_model, out);
    } else if (ext->parsed()) {
      cmd_extract(model_path, data_dir, out_path, out);
    } else if (scr->parsed()) {
      cmd_score(emb_path, trials_path, enroll_path, out_path, out);
    } else if (evl->parsed()) {
      cmd_eval(scores_path, trials_path, out_path, extra_dcf, out);
    } else if (att->parsed()) {
      cmd_attn(model_path, utt_path, out_path, out);
    } else if (grc->parsed()) {
      if (!cmd_gradcheck(config_path, seed.value_or(1), out)) {
        err << "gradcheck: relative error above tolerance\n";
        return 3;
      }
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace xvec::cli
