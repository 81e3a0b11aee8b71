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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include "support.hpp"
#include "xvec/cli.hpp"
#include "xvec/eval.hpp"

using namespace xvec;
using xvec::testing::scratch_dir;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome xvec_run(std::initializer_list<std::string> args) {
  std::vector<std::string> owned{"xvec"};
  owned.insert(owned.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : owned) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

Json last_json_line(const std::string& text) {
  std::istringstream in(text);
  std::string line, last;
  while (std::getline(in, line)) {
    if (!line.empty()) last = line;
  }
  return Json::parse(last);
}

cli::RunConfig small_run() {
  cli::RunConfig c;
  c.model = model::ModelConfig::tiny(model::PoolingKind::kAttention);
  c.synth.num_speakers = 3;
  c.synth.utts_per_speaker = 4;
  c.synth.min_frames = 12;
  c.synth.max_frames = 16;
  c.synth.dim = 4;
  c.heldout.num_speakers = 2;
  c.heldout.utts_per_speaker = 3;
  c.heldout.enroll_per_speaker = 1;
  c.train.batch_size = 4;
  c.train.epochs = 2;
  c.train.chunk_len = 8;
  return c;
}

std::string write_config(const std::filesystem::path& dir, const Json& j) {
  const auto path = dir / "config.json";
  std::ofstream(path) << j.dump(2);
  return path.string();
}

}  // namespace

TEST_CASE("usage errors") {
  CHECK(xvec_run({"--help"}).code == 0);
  CHECK(xvec_run({}).code == 1);
  CHECK(xvec_run({"frobnicate"}).code == 1);
  CHECK(xvec_run({"eval", "--scores", "x.tsv"}).code == 1);
  CHECK(xvec_run({"train", "--data", "d", "--out-model", "m", "--pooling", "max"}).code == 1);
}

TEST_CASE("compatibility widths") {
  CHECK(cli::parse_compat("500") == std::vector<std::size_t>{500});
  CHECK(cli::parse_compat("100-500") == std::vector<std::size_t>{100, 500});
  CHECK(cli::parse_compat("100-100-500") == std::vector<std::size_t>{100, 100, 500});
  CHECK_THROWS_AS(cli::parse_compat(""), ConfigError);
  CHECK_THROWS_AS(cli::parse_compat("100-"), ConfigError);
  CHECK_THROWS_AS(cli::parse_compat("a-5"), ConfigError);
}

TEST_CASE("run config") {
  const cli::RunConfig c = small_run();
  const cli::RunConfig back = cli::run_config_from_json(cli::to_json(c));
  CHECK(cli::to_json(back) == cli::to_json(c));

  const auto dir = scratch_dir("cli_config");
  Json j = cli::to_json(c);
  j["train"]["lerning_rate"] = 0.1;
  const auto r = xvec_run({"gen-data", "--config", write_config(dir, j), "--out-dir", (dir / "d").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("lerning_rate") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(dir / "d"));

  Json top = cli::to_json(c);
  top["extras"] = Json::object();
  CHECK_THROWS_AS(cli::run_config_from_json(top), ConfigError);

  const auto missing = xvec_run({"gen-data", "--config", (dir / "absent.json").string(), "--out-dir", (dir / "d").string()});
  CHECK(missing.code == 2);

  const data::SynthConfig h = cli::heldout_synth(c);
  CHECK(h.num_speakers == 2);
  CHECK(h.dim == c.synth.dim);
  CHECK(h.seed != c.synth.seed);
}

TEST_CASE("gradcheck command") {
  const auto r = xvec_run({"gradcheck"});
  CHECK(r.code == 0);
  const Json j = last_json_line(r.out);
  CHECK(j.at("passed").get<bool>());
  CHECK(j.at("max_rel_error").get<double>() < 1e-4);
}

TEST_CASE("pipeline") {
  const auto dir = scratch_dir("cli_pipeline");
  const std::string config = write_config(dir, cli::to_json(small_run()));
  const std::string data = (dir / "data").string();

  auto gen = xvec_run({"gen-data", "--config", config, "--out-dir", data, "--seed", "4"});
  REQUIRE(gen.code == 0);
  CHECK(std::filesystem::exists(dir / "data" / "train" / "manifest.tsv"));
  CHECK(std::filesystem::exists(dir / "data" / "heldout" / "trials.tsv"));
  CHECK(std::filesystem::exists(dir / "data" / "heldout" / "enroll.tsv"));

  const std::string model = (dir / "att.xvm").string();
  auto trn = xvec_run({"train", "--config", config, "--data", data, "--out-model", model, "--seed", "2"});
  REQUIRE(trn.code == 0);
  const Json summary = last_json_line(trn.out);
  CHECK(summary.contains("final_loss"));
  CHECK(summary.contains("train_accuracy"));
  CHECK(std::filesystem::exists(model));
  CHECK(std::filesystem::exists(model + ".log.jsonl"));

  const std::string emb = (dir / "att.emb").string();
  REQUIRE(xvec_run({"extract", "--model", model, "--data", (dir / "data" / "heldout").string(), "--out", emb}).code == 0);
  CHECK(eval::read_embeddings(emb).size() == 6);

  const std::string trials = (dir / "data" / "heldout" / "trials.tsv").string();
  const std::string scores = (dir / "att.scores").string();
  REQUIRE(xvec_run({"score", "--embeddings", emb, "--trials", trials, "--out", scores}).code == 0);

  const std::string metrics = (dir / "metrics.json").string();
  auto ev = xvec_run({"eval", "--scores", scores, "--trials", trials, "--out", metrics, "--dcf", "0.5,1,1"});
  REQUIRE(ev.code == 0);
  const Json m = last_json_line(ev.out);
  CHECK(m.at("eer").get<double>() >= 0.0);
  CHECK(m.at("eer").get<double>() <= 1.0);
  CHECK(m.contains("min_dcf08"));
  CHECK(m.contains("min_dcf10"));
  CHECK(m.at("min_dcf_extra").size() == 1);
  std::ifstream saved(metrics);
  CHECK(Json::parse(saved) == m);
  CHECK(xvec_run({"eval", "--scores", scores, "--trials", trials, "--dcf", "2,1,1"}).code == 1);

  const std::string utt = (dir / "data" / "heldout" / "feats").string();
  std::filesystem::path first;
  for (const auto& e : std::filesystem::directory_iterator(utt)) {
    if (first.empty() || e.path() < first) first = e.path();
  }
  const std::string traj = (dir / "traj.tsv").string();
  auto att = xvec_run({"attn", "--model", model, "--utt", first.string(), "--out", traj});
  CHECK(att.code == 0);
  CHECK(std::filesystem::exists(traj));

  SUBCASE("statistics models have no attention to export") {
    const std::string stats = (dir / "stats.xvm").string();
    REQUIRE(xvec_run({"train", "--config", config, "--data", data, "--out-model", stats, "--pooling", "stats",
                      "--epochs", "1"})
                .code == 0);
    CHECK(xvec_run({"attn", "--model", stats, "--utt", first.string(), "--out", traj}).code == 1);
  }

  SUBCASE("corrupt inputs are data errors") {
    std::ofstream(dir / "junk.xvm") << "not a model";
    CHECK(xvec_run({"extract", "--model", (dir / "junk.xvm").string(), "--data", data, "--out", emb}).code == 2);
    std::ofstream(dir / "bad.scores") << "a\tb\tnot-a-number\n";
    CHECK(xvec_run({"eval", "--scores", (dir / "bad.scores").string(), "--trials", trials}).code == 2);
  }

  SUBCASE("speaker count mismatch is a data error") {
    Json j = cli::to_json(small_run());
    j["model"]["num_speakers"] = 5;
    const auto sub = dir / "wrong";
    std::filesystem::create_directories(sub);
    CHECK(xvec_run({"train", "--config", write_config(sub, j), "--data", data, "--out-model",
                    (sub / "m.xvm").string()})
              .code == 2);
  }
}
