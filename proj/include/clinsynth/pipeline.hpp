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

#ifndef CLINSYNTH_PIPELINE_HPP_
#define CLINSYNTH_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "clinsynth/adversarial.hpp"
#include "clinsynth/corpus.hpp"
#include "clinsynth/decoding.hpp"
#include "clinsynth/error.hpp"
#include "clinsynth/latent_mixture.hpp"
#include "clinsynth/llm_client.hpp"
#include "clinsynth/metrics.hpp"
#include "clinsynth/preprocess.hpp"
#include "json.hpp"

namespace clinsynth {

inline constexpr const char* kToolVersion = "0.1.0";

/// Raised for schema violations in a pipeline config. The message starts
/// with the dotted key path.
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct CorpusSection {
  std::string path = "fixtures/notes.jsonl";
  std::string format = "jsonl";
  ColumnMap column_map = default_column_map();
};

struct PreprocessSection {
  PreprocessConfig config;
  /// Replaces the built-in abbreviation list when set.
  std::string abbreviations_file;
};

struct LmSection {
  bool enabled = true;
  std::size_t order = 3;
  double alpha = 0.1;
};

struct GenerationCounts {
  std::size_t lm = 20;
  std::size_t gan = 20;
  std::size_t mixture = 20;
  std::size_t template_fills = 10;
};

struct GanSection {
  bool enabled = true;
  AdversarialConfig config;
};

struct MixtureSection {
  bool enabled = true;
  EmOptions options;
};

struct TemplateSection {
  bool enabled = true;
  std::string template_path = "templates/clinical_transcript.txt";
  std::string lexicon_path = "lexicons/default.json";
};

struct LlmSection {
  bool enabled = true;
  /// "mock" or "http".
  std::string provider = "mock";
  std::string endpoint = "http://localhost:8080/v1/complete";
  std::string model = "mock-clinical";
  std::string auth_token;
  double timeout_seconds = 60.0;
  std::string fixtures_dir = "fixtures/llm";
  std::string scenarios_dir = "prompts";
  std::string examples_path = "fixtures/transcripts.jsonl";
  std::size_t examples_per_prompt = 2;
  /// Each condition adds one request built from the default instruction.
  std::vector<std::string> conditions = {"anxiety and panic attacks",
                                         "abdominal pain and nausea"};
  double temperature = 0.7;
  std::size_t max_tokens = 512;
  BatchOptions batch;
};

struct WerChannel {
  std::string name;
  CorruptionRates rates;
};

struct EvaluateSection {
  BleuOptions bleu;
  std::vector<WerChannel> wer_channels = {
      {"low", {0.03, 0.01, 0.01}},
      {"high", {0.09, 0.03, 0.03}},
  };
};

struct PipelineConfig {
  std::uint64_t seed = 42;
  std::string out_dir = "out";
  CorpusSection corpus;
  PreprocessSection preprocess;
  SplitRatios split = {0.8, 0.1, 0.1};
  std::size_t stats_bucket_width = 32;
  LmSection lm;
  SamplerConfig sampler;
  GenerationCounts generate;
  GanSection gan;
  MixtureSection mixture;
  TemplateSection templates;
  LlmSection llm;
  EvaluateSection evaluate;
};

/// Every key with its value. The auth token is replaced by "<redacted>"
/// when `redact_secrets` is set.
nlohmann::json pipeline_config_to_json(const PipelineConfig& config,
                                       bool redact_secrets = false);

/// Starts from the defaults and overrides keys present in `obj`. Unknown
/// keys and wrongly typed values raise ConfigError naming the key path.
PipelineConfig pipeline_config_from_json(const nlohmann::json& obj);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Value checks shared by the loader and run_pipeline; throws ConfigError.
void validate_pipeline_config(const PipelineConfig& config);

struct StageRecord {
  std::string name;
  /// "ran", "skipped" (stamp unchanged) or "failed".
  std::string status;
  /// Artifact path relative to out_dir -> content hash.
  std::map<std::string, std::string> outputs;
  double seconds = 0.0;
  std::string error;
};

struct RunManifest {
  /// Hash of the config snapshot and input hashes; equal runs share it.
  std::string run_id;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> input_hashes;
  std::vector<StageRecord> stages;
  std::string tool_version = kToolVersion;
  std::string started_at;
  bool complete = false;
};

/// Timestamps and timings live under "timing" so they can be stripped for
/// comparisons.
nlohmann::json run_manifest_to_json(const RunManifest& manifest);

struct PipelineOptions {
  /// Relative input paths in the config are resolved against this.
  std::filesystem::path base_dir = CLINSYNTH_DATA_DIR;
  /// Ignore stage stamps and re-run everything.
  bool force = false;
  /// Progress lines; may be null.
  std::ostream* log = nullptr;
};

inline const std::vector<std::string>& pipeline_stage_names() {
  static const std::vector<std::string> names = {
      "ingest", "clean", "split", "stats", "preprocess",
      "train", "generate", "evaluate", "report"};
  return names;
}

/// Runs every stage in order under config.out_dir and writes manifest.json
/// there. A stage whose parameters and input hashes match its stored stamp
/// and whose outputs are intact is skipped. On failure the manifest records
/// the failed stage and the exception is rethrown.
RunManifest run_pipeline(const PipelineConfig& config, const PipelineOptions& options);

/// Provider for the configured LLM section.
std::unique_ptr<Provider> make_provider(const LlmSection& llm,
                                        const std::filesystem::path& base_dir);

/// Resolves `p` against `base` unless it is absolute.
std::filesystem::path resolve_path(const std::filesystem::path& base, const std::string& p);

}  // namespace clinsynth

#endif  // CLINSYNTH_PIPELINE_HPP_
