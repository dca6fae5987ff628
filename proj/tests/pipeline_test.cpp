// Copyright 2026 The clinsynth Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <map>

#include "clinsynth/error.hpp"
#include "clinsynth/io.hpp"
#include "clinsynth/pipeline.hpp"
#include "test_util.hpp"

namespace clinsynth {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Relative path -> bytes for every artifact, with timing removed from the
// manifest.
std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), root).generic_string();
    std::string bytes = read_file(e.path());
    if (rel == "manifest.json") {
      json m = json::parse(bytes);
      m.erase("timing");
      bytes = m.dump();
    }
    out[rel] = std::move(bytes);
  }
  return out;
}

std::map<std::string, std::string> statuses(const RunManifest& m) {
  std::map<std::string, std::string> out;
  for (const auto& s : m.stages) out[s.name] = s.status;
  return out;
}

PipelineConfig config_in(const fs::path& dir) {
  PipelineConfig c;
  c.out_dir = (dir / "out").string();
  return c;
}

TEST(Pipeline, ReportHasEverySection) {
  test::TempDir dir("pipe");
  const RunManifest m = run_pipeline(config_in(dir.path()), {});
  EXPECT_TRUE(m.complete);
  EXPECT_EQ(m.stages.size(), pipeline_stage_names().size());
  const json report = json::parse(read_file(dir.path() / "out/report/report.json"));
  for (const char* key : {"corpus", "perplexity", "bleu", "wer"}) {
    EXPECT_TRUE(report.contains(key)) << key;
  }
  EXPECT_FALSE(report.at("wer").empty());
  const json manifest = json::parse(read_file(dir.path() / "out/manifest.json"));
  EXPECT_EQ(manifest.at("run_id"), m.run_id);
  EXPECT_TRUE(manifest.contains("timing"));
  EXPECT_EQ(manifest.at("config").at("llm").at("auth_token"), "");
}

TEST(Pipeline, TwoRunsIdentical) {
  test::TempDir dir("pipe");
  const PipelineConfig c = config_in(dir.path());
  run_pipeline(c, {});
  const auto first = snapshot(c.out_dir);
  fs::remove_all(c.out_dir);
  run_pipeline(c, {});
  const auto second = snapshot(c.out_dir);
  ASSERT_EQ(first.size(), second.size());
  for (const auto& [rel, bytes] : first) {
    ASSERT_TRUE(second.count(rel)) << rel;
    EXPECT_EQ(bytes, second.at(rel)) << rel;
  }
}

TEST(Pipeline, SeedChangesArtifacts) {
  test::TempDir dir("pipe");
  PipelineConfig c = config_in(dir.path());
  run_pipeline(c, {});
  const std::string a = read_file(fs::path(c.out_dir) / "split/notes.jsonl");
  c.seed = 7;
  run_pipeline(c, {});
  EXPECT_NE(a, read_file(fs::path(c.out_dir) / "split/notes.jsonl"));
}

TEST(Pipeline, UnchangedStagesAreSkipped) {
  test::TempDir dir("pipe");
  const PipelineConfig c = config_in(dir.path());
  run_pipeline(c, {});
  for (const auto& [name, st] : statuses(run_pipeline(c, {}))) EXPECT_EQ(st, "skipped") << name;

  // Losing evaluate outputs reruns evaluate; its bytes come out the same, so
  // the report stays up to date.
  fs::remove(fs::path(c.out_dir) / "evaluate/wer.json");
  auto st = statuses(run_pipeline(c, {}));
  EXPECT_EQ(st["train"], "skipped");
  EXPECT_EQ(st["evaluate"], "ran");
  EXPECT_EQ(st["report"], "skipped");

  // A parameter change reruns the owning stage and what depends on it.
  PipelineConfig changed = c;
  changed.evaluate.bleu.smoothing = true;
  st = statuses(run_pipeline(changed, {}));
  EXPECT_EQ(st["generate"], "skipped");
  EXPECT_EQ(st["evaluate"], "ran");
  EXPECT_EQ(st["report"], "ran");

  PipelineOptions force;
  force.force = true;
  for (const auto& [name, s] : statuses(run_pipeline(c, force))) EXPECT_EQ(s, "ran") << name;
}

TEST(Pipeline, FailureRecordedInManifest) {
  test::TempDir dir("pipe");
  PipelineConfig c = config_in(dir.path());
  c.corpus.path = "does/not/exist.jsonl";
  EXPECT_THROW(run_pipeline(c, {}), Error);
  const json m = json::parse(read_file(fs::path(c.out_dir) / "manifest.json"));
  EXPECT_FALSE(m.at("complete").get<bool>());
  ASSERT_EQ(m.at("stages").size(), 1u);
  EXPECT_EQ(m.at("stages")[0].at("name"), "ingest");
  EXPECT_EQ(m.at("stages")[0].at("status"), "failed");
}

TEST(Config, UnknownKeyNamesPath) {
  try {
    pipeline_config_from_json({{"lm", {{"ordr", 3}}}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("lm.ordr", 0), 0u) << e.what();
  }
  EXPECT_THROW(pipeline_config_from_json({{"bogus", 1}}), ConfigError);
}

TEST(Config, WrongTypeNamesPath) {
  try {
    pipeline_config_from_json({{"gan", {{"epochs", "many"}}}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("gan.epochs"), std::string::npos) << e.what();
  }
}

TEST(Config, RoundTripAndShippedFile) {
  const PipelineConfig defaults;
  const json j = pipeline_config_to_json(defaults);
  EXPECT_EQ(pipeline_config_to_json(pipeline_config_from_json(j)), j);
  const PipelineConfig shipped = load_pipeline_config(test::data_dir() / "pipeline.json");
  EXPECT_EQ(pipeline_config_to_json(shipped), j);
}

TEST(Config, SecretsRedacted) {
  PipelineConfig c;
  c.llm.auth_token = "secret";
  EXPECT_EQ(pipeline_config_to_json(c, true).at("llm").at("auth_token"), "<redacted>");
  EXPECT_EQ(pipeline_config_to_json(c, false).at("llm").at("auth_token"), "secret");
}

TEST(Config, InvalidValuesRejectedBeforeWork) {
  test::TempDir dir("pipe");
  PipelineConfig c = config_in(dir.path());
  c.split = {0.5, 0.1, 0.1};
  EXPECT_THROW(run_pipeline(c, {}), ValidationError);
  EXPECT_FALSE(fs::exists(fs::path(c.out_dir) / "ingest"));
}

}  // namespace
}  // namespace clinsynth
