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

#include "clinsynth/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <set>
#include <sstream>
#include <type_traits>

#include "clinsynth/error.hpp"
#include "clinsynth/io.hpp"
#include "clinsynth/ngram.hpp"
#include "clinsynth/review.hpp"
#include "clinsynth/rng.hpp"
#include "clinsynth/template_gen.hpp"
#include "clinsynth/transcript.hpp"

namespace clinsynth {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

// Reads keys from one JSON object and remembers which were asked for, so
// finish() can reject anything left over.
class Section {
 public:
  Section(const json* obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (obj_ && !obj_->is_object()) throw ConfigError(where() + ": expected an object");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!obj_ || !obj_->contains(key)) return;
    const json& v = obj_->at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(full(key) + ": expected a boolean");
    } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) {
        throw ConfigError(full(key) + ": expected a non-negative integer");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(full(key) + ": expected a number");
    }
    try {
      out = v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(full(key) + ": " + e.what());
    }
  }

  bool has(const std::string& key) const { return obj_ && obj_->contains(key); }
  const json* raw(const std::string& key) {
    seen_.insert(key);
    return has(key) ? &obj_->at(key) : nullptr;
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    return Section(has(key) ? &obj_->at(key) : nullptr, full(key));
  }

  std::string full(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    if (!obj_) return;
    for (const auto& [key, value] : obj_->items()) {
      if (!seen_.count(key)) throw ConfigError(full(key) + ": unknown key");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  const json* obj_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class F>
void check(const std::string& path, F&& fn) {
  try {
    fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

json sampler_section_to_json(const SamplerConfig& s) {
  return {{"temperature", s.temperature},
          {"top_k", s.top_k ? json(*s.top_k) : json("all")},
          {"top_p", s.top_p ? json(*s.top_p) : json()},
          {"max_length", s.max_length}};
}

}  // namespace

json pipeline_config_to_json(const PipelineConfig& c, bool redact_secrets) {
  json channels = json::array();
  for (const auto& ch : c.evaluate.wer_channels) {
    channels.push_back({{"name", ch.name},
                        {"substitution", ch.rates.substitution},
                        {"deletion", ch.rates.deletion},
                        {"insertion", ch.rates.insertion}});
  }
  const auto& g = c.gan.config;
  std::string token = c.llm.auth_token;
  if (redact_secrets && !token.empty()) token = "<redacted>";
  return {
      {"seed", c.seed},
      {"out_dir", c.out_dir},
      {"corpus",
       {{"path", c.corpus.path},
        {"format", c.corpus.format},
        {"column_map", c.corpus.column_map}}},
      {"preprocess",
       {{"lowercase", c.preprocess.config.lowercase},
        {"abbreviations_file", c.preprocess.abbreviations_file},
        {"min_token_count", c.preprocess.config.min_token_count},
        {"preserve_deid_markers", c.preprocess.config.preserve_deid_markers}}},
      {"split",
       {{"train", c.split[0]}, {"validation", c.split[1]}, {"test", c.split[2]}}},
      {"stats", {{"bucket_width", c.stats_bucket_width}}},
      {"lm", {{"enabled", c.lm.enabled}, {"order", c.lm.order}, {"alpha", c.lm.alpha}}},
      {"sampler", sampler_section_to_json(c.sampler)},
      {"generate",
       {{"lm", c.generate.lm},
        {"gan", c.generate.gan},
        {"mixture", c.generate.mixture},
        {"template", c.generate.template_fills}}},
      {"gan",
       {{"enabled", c.gan.enabled},
        {"epochs", g.epochs},
        {"batch_size", g.batch_size},
        {"g_steps", g.g_steps},
        {"d_steps", g.d_steps},
        {"generator_lr", g.generator_lr},
        {"discriminator_lr", g.discriminator_lr},
        {"generator_order", g.generator_order},
        {"discriminator_order", g.discriminator_order},
        {"max_length", g.max_length},
        {"baseline", g.baseline},
        {"lm_order", g.lm_order},
        {"lm_alpha", g.lm_alpha}}},
      {"mixture",
       {{"enabled", c.mixture.enabled},
        {"components", c.mixture.options.components},
        {"alpha", c.mixture.options.alpha},
        {"iterations", c.mixture.options.iterations},
        {"order", c.mixture.options.order}}},
      {"template",
       {{"enabled", c.templates.enabled},
        {"template_path", c.templates.template_path},
        {"lexicon_path", c.templates.lexicon_path}}},
      {"llm",
       {{"enabled", c.llm.enabled},
        {"provider", c.llm.provider},
        {"endpoint", c.llm.endpoint},
        {"model", c.llm.model},
        {"auth_token", token},
        {"timeout_seconds", c.llm.timeout_seconds},
        {"fixtures_dir", c.llm.fixtures_dir},
        {"scenarios_dir", c.llm.scenarios_dir},
        {"examples_path", c.llm.examples_path},
        {"examples_per_prompt", c.llm.examples_per_prompt},
        {"conditions", c.llm.conditions},
        {"temperature", c.llm.temperature},
        {"max_tokens", c.llm.max_tokens},
        {"max_retries", c.llm.batch.max_retries},
        {"max_inflight", c.llm.batch.max_inflight},
        {"initial_backoff_ms", c.llm.batch.initial_backoff.count()},
        {"backoff_multiplier", c.llm.batch.backoff_multiplier},
        {"max_backoff_ms", c.llm.batch.max_backoff.count()}}},
      {"evaluate",
       {{"bleu_max_order", c.evaluate.bleu.max_order},
        {"bleu_weights",
         c.evaluate.bleu.weights ? json(*c.evaluate.bleu.weights) : json()},
        {"bleu_smoothing", c.evaluate.bleu.smoothing},
        {"wer_channels", channels}}},
  };
}

void validate_pipeline_config(const PipelineConfig& c) {
  check("corpus.format", [&] { parse_record_format(c.corpus.format); });
  check("preprocess", [&] { c.preprocess.config.validate(); });
  const auto& r = c.split;
  if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9 || r[0] < 0 || r[1] < 0 || r[2] < 0) {
    throw ConfigError("split: ratios must be nonnegative and sum to 1");
  }
  if (c.stats_bucket_width < 1) throw ConfigError("stats.bucket_width: must be >= 1");
  if (c.lm.order < 1) throw ConfigError("lm.order: must be >= 1");
  if (c.lm.alpha < 0) throw ConfigError("lm.alpha: must be >= 0");
  check("sampler", [&] { c.sampler.validate(); });

  const auto& g = c.gan.config;
  if (g.batch_size < 1) throw ConfigError("gan.batch_size: must be >= 1");
  if (g.generator_order < 1) throw ConfigError("gan.generator_order: must be >= 1");
  if (g.discriminator_order < 1) throw ConfigError("gan.discriminator_order: must be >= 1");
  if (g.max_length < 1) throw ConfigError("gan.max_length: must be >= 1");
  if (!(g.lm_alpha > 0)) throw ConfigError("gan.lm_alpha: must be > 0");

  const auto& m = c.mixture.options;
  if (m.components < 1) throw ConfigError("mixture.components: must be >= 1");
  if (!(m.alpha > 0)) throw ConfigError("mixture.alpha: must be > 0");
  if (m.order < 1) throw ConfigError("mixture.order: must be >= 1");

  const auto& l = c.llm;
  if (l.provider != "mock" && l.provider != "http") {
    throw ConfigError("llm.provider: expected \"mock\" or \"http\"");
  }
  if (l.batch.max_inflight < 1) throw ConfigError("llm.max_inflight: must be >= 1");
  if (l.batch.initial_backoff.count() < 0 || l.batch.max_backoff.count() < 0) {
    throw ConfigError("llm: backoff durations must be >= 0");
  }
  if (l.batch.backoff_multiplier < 1.0) {
    throw ConfigError("llm.backoff_multiplier: must be >= 1");
  }

  const auto& e = c.evaluate;
  if (e.bleu.max_order < 1) throw ConfigError("evaluate.bleu_max_order: must be >= 1");
  if (e.bleu.weights) {
    check("evaluate.bleu_weights", [&] { bleu({"x"}, {{"x"}}, e.bleu); });
  }
  for (std::size_t i = 0; i < e.wer_channels.size(); ++i) {
    const std::string at = "evaluate.wer_channels[" + std::to_string(i) + "]";
    if (e.wer_channels[i].name.empty()) throw ConfigError(at + ".name: must be nonempty");
    check(at, [&] { e.wer_channels[i].rates.validate(); });
  }
}

PipelineConfig pipeline_config_from_json(const json& obj) {
  PipelineConfig c;
  Section root(&obj, "");
  root.get("seed", c.seed);
  root.get("out_dir", c.out_dir);

  {
    Section s = root.child("corpus");
    s.get("path", c.corpus.path);
    s.get("format", c.corpus.format);
    s.get("column_map", c.corpus.column_map);
    s.finish();
  }
  {
    Section s = root.child("preprocess");
    s.get("lowercase", c.preprocess.config.lowercase);
    s.get("abbreviations_file", c.preprocess.abbreviations_file);
    s.get("min_token_count", c.preprocess.config.min_token_count);
    s.get("preserve_deid_markers", c.preprocess.config.preserve_deid_markers);
    s.finish();
  }
  {
    Section s = root.child("split");
    s.get("train", c.split[0]);
    s.get("validation", c.split[1]);
    s.get("test", c.split[2]);
    s.finish();
  }
  {
    Section s = root.child("stats");
    s.get("bucket_width", c.stats_bucket_width);
    s.finish();
  }
  {
    Section s = root.child("lm");
    s.get("enabled", c.lm.enabled);
    s.get("order", c.lm.order);
    s.get("alpha", c.lm.alpha);
    s.finish();
  }
  {
    Section s = root.child("sampler");
    s.get("temperature", c.sampler.temperature);
    s.get("max_length", c.sampler.max_length);
    if (const json* k = s.raw("top_k"); k && !k->is_null()) {
      if (k->is_string() && k->get<std::string>() == "all") {
        c.sampler.top_k.reset();
      } else if (k->is_number_unsigned()) {
        c.sampler.top_k = k->get<std::size_t>();
      } else {
        throw ConfigError("sampler.top_k: expected a positive integer or \"all\"");
      }
    }
    if (const json* p = s.raw("top_p"); p && !p->is_null()) {
      if (!p->is_number()) throw ConfigError("sampler.top_p: expected a number");
      c.sampler.top_p = p->get<double>();
    }
    s.finish();
  }
  {
    Section s = root.child("generate");
    s.get("lm", c.generate.lm);
    s.get("gan", c.generate.gan);
    s.get("mixture", c.generate.mixture);
    s.get("template", c.generate.template_fills);
    s.finish();
  }
  {
    Section s = root.child("gan");
    auto& g = c.gan.config;
    s.get("enabled", c.gan.enabled);
    s.get("epochs", g.epochs);
    s.get("batch_size", g.batch_size);
    s.get("g_steps", g.g_steps);
    s.get("d_steps", g.d_steps);
    s.get("generator_lr", g.generator_lr);
    s.get("discriminator_lr", g.discriminator_lr);
    s.get("generator_order", g.generator_order);
    s.get("discriminator_order", g.discriminator_order);
    s.get("max_length", g.max_length);
    s.get("baseline", g.baseline);
    s.get("lm_order", g.lm_order);
    s.get("lm_alpha", g.lm_alpha);
    s.finish();
  }
  {
    Section s = root.child("mixture");
    auto& m = c.mixture.options;
    s.get("enabled", c.mixture.enabled);
    s.get("components", m.components);
    s.get("alpha", m.alpha);
    s.get("iterations", m.iterations);
    s.get("order", m.order);
    s.finish();
  }
  {
    Section s = root.child("template");
    s.get("enabled", c.templates.enabled);
    s.get("template_path", c.templates.template_path);
    s.get("lexicon_path", c.templates.lexicon_path);
    s.finish();
  }
  {
    Section s = root.child("llm");
    auto& l = c.llm;
    s.get("enabled", l.enabled);
    s.get("provider", l.provider);
    s.get("endpoint", l.endpoint);
    s.get("model", l.model);
    s.get("auth_token", l.auth_token);
    s.get("timeout_seconds", l.timeout_seconds);
    s.get("fixtures_dir", l.fixtures_dir);
    s.get("scenarios_dir", l.scenarios_dir);
    s.get("examples_path", l.examples_path);
    s.get("examples_per_prompt", l.examples_per_prompt);
    s.get("conditions", l.conditions);
    s.get("temperature", l.temperature);
    s.get("max_tokens", l.max_tokens);
    s.get("max_retries", l.batch.max_retries);
    s.get("max_inflight", l.batch.max_inflight);
    std::int64_t initial = l.batch.initial_backoff.count();
    std::int64_t max_backoff = l.batch.max_backoff.count();
    s.get("initial_backoff_ms", initial);
    s.get("backoff_multiplier", l.batch.backoff_multiplier);
    s.get("max_backoff_ms", max_backoff);
    s.finish();
    l.batch.initial_backoff = std::chrono::milliseconds(initial);
    l.batch.max_backoff = std::chrono::milliseconds(max_backoff);
  }
  {
    Section s = root.child("evaluate");
    auto& e = c.evaluate;
    s.get("bleu_max_order", e.bleu.max_order);
    if (const json* w = s.raw("bleu_weights"); w && !w->is_null()) {
      check("evaluate.bleu_weights",
            [&] { e.bleu.weights = w->get<std::vector<double>>(); });
    }
    s.get("bleu_smoothing", e.bleu.smoothing);
    if (const json* chans = s.raw("wer_channels")) {
      if (!chans->is_array()) throw ConfigError("evaluate.wer_channels: expected an array");
      e.wer_channels.clear();
      for (std::size_t i = 0; i < chans->size(); ++i) {
        Section ch(&(*chans)[i], "evaluate.wer_channels[" + std::to_string(i) + "]");
        WerChannel w;
        ch.get("name", w.name);
        ch.get("substitution", w.rates.substitution);
        ch.get("deletion", w.rates.deletion);
        ch.get("insertion", w.rates.insertion);
        ch.finish();
        e.wer_channels.push_back(std::move(w));
      }
    }
    s.finish();
  }
  root.finish();
  validate_pipeline_config(c);
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  json obj;
  try {
    obj = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return pipeline_config_from_json(obj);
}

fs::path resolve_path(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::unique_ptr<Provider> make_provider(const LlmSection& llm, const fs::path& base_dir) {
  if (llm.provider == "http") {
    return std::make_unique<HttpProvider>(
        HttpProviderConfig{llm.endpoint, llm.auth_token, llm.timeout_seconds});
  }
  MockProviderOptions opts;
  if (!llm.fixtures_dir.empty()) opts.fixtures_dir = resolve_path(base_dir, llm.fixtures_dir);
  return std::make_unique<MockProvider>(std::move(opts));
}

json run_manifest_to_json(const RunManifest& m) {
  json stages = json::array();
  json timings = json::object();
  double total = 0.0;
  for (const auto& s : m.stages) {
    json rec = {{"name", s.name}, {"status", s.status}, {"outputs", s.outputs}};
    if (!s.error.empty()) rec["error"] = s.error;
    stages.push_back(std::move(rec));
    timings[s.name] = s.seconds;
    total += s.seconds;
  }
  return {{"run_id", m.run_id},
          {"tool_version", m.tool_version},
          {"seed", m.seed},
          {"complete", m.complete},
          {"config", m.config},
          {"input_hashes", m.input_hashes},
          {"stages", stages},
          {"timing",
           {{"started_at", m.started_at}, {"stage_seconds", timings}, {"total_seconds", total}}}};
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

namespace {

struct TokenDoc {
  std::string id;
  TokenSequence tokens;
};

std::string token_docs_jsonl(const std::vector<TokenDoc>& docs) {
  std::string out;
  for (const auto& d : docs) {
    out += json{{"id", d.id}, {"tokens", d.tokens}}.dump();
    out += '\n';
  }
  return out;
}

std::vector<TokenDoc> read_token_docs(const fs::path& path) {
  std::vector<TokenDoc> out;
  for (const auto& line : read_lines(path)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    out.push_back({j.at("id").get<std::string>(), j.at("tokens").get<TokenSequence>()});
  }
  return out;
}

std::vector<TokenSequence> tokens_of(const std::vector<TokenDoc>& docs) {
  std::vector<TokenSequence> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(d.tokens);
  return out;
}

std::string indexed_id(const std::string& prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%04zu", prefix.c_str(), i);
  return buf;
}

// Content hash of a file, or of a directory's sorted (name, hash) listing.
std::string hash_path(const fs::path& path) {
  if (!fs::exists(path)) return "missing";
  if (!fs::is_directory(path)) return hash_file(path);
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& e : fs::recursive_directory_iterator(path)) {
    if (!e.is_regular_file()) continue;
    entries.emplace_back(fs::relative(e.path(), path).generic_string(), hash_file(e.path()));
  }
  std::sort(entries.begin(), entries.end());
  std::string acc;
  for (const auto& [name, h] : entries) acc += name + '\t' + h + '\n';
  return hex64(fnv1a64(acc));
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

PreprocessConfig effective_preprocess(const PipelineConfig& c, const fs::path& base) {
  PreprocessConfig p = c.preprocess.config;
  if (!c.preprocess.abbreviations_file.empty()) {
    p.abbreviations = load_abbreviations(resolve_path(base, c.preprocess.abbreviations_file));
  }
  return p;
}

// Output sink for one stage: files land in out_dir/<stage>/.
class StageOutputs {
 public:
  StageOutputs(fs::path out_dir, std::string stage)
      : out_dir_(std::move(out_dir)), stage_(std::move(stage)) {}

  void write(const std::string& name, std::string_view contents) {
    const std::string rel = stage_ + "/" + name;
    write_file(out_dir_ / rel, contents);
    files_.push_back(rel);
  }
  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }
  const std::vector<std::string>& files() const { return files_; }

 private:
  fs::path out_dir_;
  std::string stage_;
  std::vector<std::string> files_;
};

class Runner {
 public:
  Runner(const PipelineConfig& config, const PipelineOptions& options)
      : c_(config), opt_(options), out_(config.out_dir) {}

  RunManifest run();

 private:
  using Body = std::function<void(StageOutputs&, std::uint64_t seed)>;

  fs::path art(const std::string& rel) const { return out_ / rel; }
  fs::path input(const std::string& p) const { return resolve_path(opt_.base_dir, p); }
  void log(const std::string& line) const {
    if (opt_.log) *opt_.log << line << '\n';
  }

  void stage(const std::string& name, const json& params,
             const std::vector<fs::path>& inputs, const Body& body);

  void ingest(StageOutputs& o, std::uint64_t seed);
  void clean(StageOutputs& o, std::uint64_t seed);
  void split(StageOutputs& o, std::uint64_t seed);
  void stats(StageOutputs& o, std::uint64_t seed);
  void preprocess(StageOutputs& o, std::uint64_t seed);
  void train(StageOutputs& o, std::uint64_t seed);
  void generate(StageOutputs& o, std::uint64_t seed);
  void evaluate(StageOutputs& o, std::uint64_t seed);
  void report(StageOutputs& o, std::uint64_t seed);

  const PipelineConfig& c_;
  const PipelineOptions& opt_;
  fs::path out_;
  RunManifest manifest_;
};

void Runner::stage(const std::string& name, const json& params,
                   const std::vector<fs::path>& inputs, const Body& body) {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t seed = derive_seed(c_.seed, name);
  json stamp_doc = {{"stage", name}, {"params", params}, {"seed", seed},
                    {"tool_version", kToolVersion}};
  stamp_doc["inputs"] = json::array();
  for (const auto& in : inputs) stamp_doc["inputs"].push_back(hash_path(in));
  const std::string stamp = hex64(fnv1a64(stamp_doc.dump()));
  const fs::path stamp_file = out_ / ".stamps" / (name + ".json");

  StageRecord rec;
  rec.name = name;
  if (!opt_.force && fs::exists(stamp_file)) {
    try {
      const json saved = json::parse(read_file(stamp_file));
      bool intact = saved.at("stamp").get<std::string>() == stamp;
      for (const auto& [rel, h] : saved.at("outputs").items()) {
        if (!intact) break;
        intact = fs::exists(art(rel)) && hash_file(art(rel)) == h.get<std::string>();
      }
      if (intact) {
        rec.status = "skipped";
        rec.outputs = saved.at("outputs").get<std::map<std::string, std::string>>();
      }
    } catch (const std::exception&) {
      // unreadable stamp: run the stage
    }
  }

  if (rec.status.empty()) {
    log("[" + name + "] running");
    fs::remove_all(out_ / name);
    fs::create_directories(out_ / name);
    StageOutputs outputs(out_, name);
    try {
      body(outputs, seed);
    } catch (const std::exception& e) {
      rec.status = "failed";
      rec.error = e.what();
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      manifest_.stages.push_back(rec);
      fs::remove(stamp_file);
      write_file(out_ / "manifest.json", run_manifest_to_json(manifest_).dump(2) + "\n");
      log("[" + name + "] failed: " + rec.error);
      throw;
    }
    rec.status = "ran";
    for (const auto& rel : outputs.files()) rec.outputs[rel] = hash_file(art(rel));
    write_file(stamp_file, json{{"stamp", stamp}, {"outputs", rec.outputs}}.dump(2) + "\n");
  } else {
    log("[" + name + "] up to date");
  }
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  manifest_.stages.push_back(std::move(rec));
}

RunManifest Runner::run() {
  validate_pipeline_config(c_);
  manifest_.seed = c_.seed;
  manifest_.config = pipeline_config_to_json(c_, true);
  manifest_.started_at = utc_now();

  std::vector<std::pair<std::string, std::string>> externals = {
      {"corpus", c_.corpus.path}};
  if (!c_.preprocess.abbreviations_file.empty()) {
    externals.emplace_back("abbreviations", c_.preprocess.abbreviations_file);
  }
  if (c_.templates.enabled) {
    externals.emplace_back("template", c_.templates.template_path);
    externals.emplace_back("lexicon", c_.templates.lexicon_path);
  }
  if (c_.llm.enabled) {
    externals.emplace_back("scenarios", c_.llm.scenarios_dir);
    externals.emplace_back("examples", c_.llm.examples_path);
    if (c_.llm.provider == "mock" && !c_.llm.fixtures_dir.empty()) {
      externals.emplace_back("llm_fixtures", c_.llm.fixtures_dir);
    }
  }
  for (const auto& [key, p] : externals) manifest_.input_hashes[key] = hash_path(input(p));
  manifest_.run_id =
      hex64(fnv1a64(manifest_.config.dump() + json(manifest_.input_hashes).dump()));

  fs::create_directories(out_);
  const json cfg = manifest_.config;
  using namespace std::placeholders;
  auto bind = [this](void (Runner::*fn)(StageOutputs&, std::uint64_t)) -> Body {
    return [this, fn](StageOutputs& o, std::uint64_t s) { (this->*fn)(o, s); };
  };

  stage("ingest", cfg["corpus"], {input(c_.corpus.path)}, bind(&Runner::ingest));
  stage("clean", cfg["preprocess"],
        {art("ingest/notes.jsonl"),
         c_.preprocess.abbreviations_file.empty() ? art("ingest/notes.jsonl")
                                                  : input(c_.preprocess.abbreviations_file)},
        bind(&Runner::clean));
  stage("split", cfg["split"], {art("clean/notes.jsonl")}, bind(&Runner::split));
  stage("stats", cfg["stats"], {art("split/notes.jsonl")}, bind(&Runner::stats));
  stage("preprocess", {cfg["preprocess"], cfg["gan"]["max_length"]},
        {art("split/notes.jsonl")}, bind(&Runner::preprocess));
  stage("train", {{"lm", cfg["lm"]}, {"gan", cfg["gan"]}, {"mixture", cfg["mixture"]}},
        {art("preprocess")}, bind(&Runner::train));

  std::vector<fs::path> gen_inputs = {art("train")};
  if (c_.templates.enabled) {
    gen_inputs.push_back(input(c_.templates.template_path));
    gen_inputs.push_back(input(c_.templates.lexicon_path));
  }
  if (c_.llm.enabled) {
    gen_inputs.push_back(input(c_.llm.scenarios_dir));
    gen_inputs.push_back(input(c_.llm.examples_path));
    if (!c_.llm.fixtures_dir.empty()) gen_inputs.push_back(input(c_.llm.fixtures_dir));
  }
  stage("generate",
        {{"sampler", cfg["sampler"]}, {"generate", cfg["generate"]},
         {"template", cfg["template"]}, {"llm", cfg["llm"]},
         {"preprocess", cfg["preprocess"]}},
        gen_inputs, bind(&Runner::generate));
  stage("evaluate", {{"evaluate", cfg["evaluate"]}, {"preprocess", cfg["preprocess"]}},
        {art("preprocess"), art("train"), art("generate")}, bind(&Runner::evaluate));
  stage("report", json::object(), {art("split"), art("stats"), art("train"), art("generate"), art("evaluate")},
        bind(&Runner::report));

  manifest_.complete = true;
  write_file(out_ / "manifest.json", run_manifest_to_json(manifest_).dump(2) + "\n");
  return manifest_;
}


void Runner::ingest(StageOutputs& o, std::uint64_t) {
  const Corpus corpus = clinsynth::ingest(input(c_.corpus.path),
                                          parse_record_format(c_.corpus.format),
                                          c_.corpus.column_map);
  o.write("notes.jsonl", to_jsonl(corpus));
}

void Runner::clean(StageOutputs& o, std::uint64_t) {
  const Corpus raw = clinsynth::ingest(art("ingest/notes.jsonl"), RecordFormat::kJsonl);
  const PreprocessConfig pre = effective_preprocess(c_, opt_.base_dir);
  std::vector<ClinicalNote> kept;
  std::string rejected;
  for (const auto& note : raw.notes()) {
    auto result = clean_note(note, pre);
    if (auto* n = std::get_if<ClinicalNote>(&result)) {
      kept.push_back(std::move(*n));
    } else {
      const auto& r = std::get<CleanRejection>(result);
      rejected += json{{"id", r.note_id}, {"reason", to_string(r.reason)}}.dump() + "\n";
    }
  }
  if (kept.empty()) throw ValidationError("every note was rejected during cleaning");
  o.write("notes.jsonl", to_jsonl(Corpus(std::move(kept), raw.manifest())));
  o.write("rejected.jsonl", rejected);
}

void Runner::split(StageOutputs& o, std::uint64_t seed) {
  const Corpus cleaned = clinsynth::ingest(art("clean/notes.jsonl"), RecordFormat::kJsonl);
  const Corpus split = split_corpus(cleaned, c_.split, seed);
  o.write("notes.jsonl", to_jsonl(split));
  for (Split s : {Split::kTrain, Split::kValidation, Split::kTest}) {
    o.write(std::string(to_string(s)) + ".jsonl",
            to_jsonl(Corpus(split.subset(s), split.manifest())));
  }
}

void Runner::stats(StageOutputs& o, std::uint64_t) {
  const Corpus corpus = clinsynth::ingest(art("split/notes.jsonl"), RecordFormat::kJsonl);
  const CorpusStats st = compute_stats(corpus, c_.stats_bucket_width);
  json j = stats_to_json(st);
  json splits = json::object();
  for (Split s : {Split::kTrain, Split::kValidation, Split::kTest}) {
    splits[std::string(to_string(s))] = corpus.subset(s).size();
  }
  j["splits"] = splits;
  j["notes"] = corpus.size();
  o.write_json("stats.json", j);
  o.write("histogram.csv", histogram_csv(st));
}

void Runner::preprocess(StageOutputs& o, std::uint64_t) {
  const Corpus corpus = clinsynth::ingest(art("split/notes.jsonl"), RecordFormat::kJsonl);
  const PreprocessConfig pre = effective_preprocess(c_, opt_.base_dir);
  for (Split s : {Split::kTrain, Split::kValidation, Split::kTest}) {
    std::vector<TokenDoc> docs;
    std::vector<TokenDoc> sentences;
    for (const auto& note : corpus.subset(s)) {
      docs.push_back({note.id, tokenize(note.text, pre)});
      const auto sents = segment_sentences(note.text, pre);
      for (std::size_t i = 0; i < sents.size(); ++i) {
        auto toks = tokenize(sents[i], pre);
        if (toks.empty() || toks.size() > c_.gan.config.max_length) continue;
        sentences.push_back({note.id + "#" + std::to_string(i), std::move(toks)});
      }
    }
    const std::string name(to_string(s));
    o.write(name + ".jsonl", token_docs_jsonl(docs));
    o.write(name + "_sentences.jsonl", token_docs_jsonl(sentences));
    if (s == Split::kTrain) {
      if (docs.empty()) throw ValidationError("the train split is empty");
      o.write("vocab.txt", vocabulary_to_text(build_vocabulary(tokens_of(docs), pre)));
    }
  }
}

void Runner::train(StageOutputs& o, std::uint64_t seed) {
  const auto docs = tokens_of(read_token_docs(art("preprocess/train.jsonl")));
  const Vocabulary vocab = vocabulary_from_text(read_file(art("preprocess/vocab.txt")));
  if (c_.lm.enabled) {
    const NGramModel lm = train_ngram(docs, c_.lm.order, c_.lm.alpha, vocab);
    o.write("lm.json", ngram_to_json(lm).dump() + "\n");
  }
  if (c_.gan.enabled) {
    const auto sentences = tokens_of(read_token_docs(art("preprocess/train_sentences.jsonl")));
    if (sentences.empty()) {
      throw ValidationError("no training sentences fit within gan.max_length");
    }
    AdversarialConfig cfg = c_.gan.config;
    cfg.seed = derive_seed(seed, "gan");
    const GanTrainState state = train_adversarial(sentences, cfg);
    o.write("gan.json", gan_state_to_json(state).dump() + "\n");
    o.write("gan_curves.csv", gan_curves_csv(state.curves));
  }
  if (c_.mixture.enabled) {
    EmOptions em = c_.mixture.options;
    em.seed = derive_seed(seed, "mixture");
    const MixtureModel model = fit_em(docs, em);
    o.write("mixture.json", mixture_to_json(model).dump() + "\n");
    o.write("mixture_curve.csv", mixture_curve_csv(model.curve));
  }
}

void Runner::generate(StageOutputs& o, std::uint64_t seed) {
  SamplerConfig sampler = c_.sampler;
  if (c_.lm.enabled) {
    const NGramModel lm = ngram_from_json(json::parse(read_file(art("train/lm.json"))));
    const std::uint64_t base = derive_seed(seed, "lm");
    std::vector<TokenDoc> out;
    for (std::size_t i = 0; i < c_.generate.lm; ++i) {
      sampler.seed = derive_seed(base, i);
      out.push_back({indexed_id("lm", i), sample_sequence(lm, sampler)});
    }
    o.write("lm_samples.jsonl", token_docs_jsonl(out));
  }
  if (c_.gan.enabled) {
    const GanTrainState state =
        gan_state_from_json(json::parse(read_file(art("train/gan.json"))));
    std::vector<TokenDoc> out;
    if (c_.generate.gan > 0) {
      const auto samples = sample_gan(state, derive_seed(seed, "gan"), c_.generate.gan);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        out.push_back({indexed_id("gan", i), samples[i]});
      }
    }
    o.write("gan_samples.jsonl", token_docs_jsonl(out));
  }
  if (c_.mixture.enabled) {
    const MixtureModel model =
        mixture_from_json(json::parse(read_file(art("train/mixture.json"))));
    const std::uint64_t base = derive_seed(seed, "mixture");
    std::vector<TokenDoc> out;
    for (std::size_t i = 0; i < c_.generate.mixture; ++i) {
      sampler.seed = derive_seed(base, i);
      out.push_back({indexed_id("mixture", i), sample_mixture(model, sampler)});
    }
    o.write("mixture_samples.jsonl", token_docs_jsonl(out));
  }
  if (c_.templates.enabled) {
    const fs::path tpath = input(c_.templates.template_path);
    const TranscriptTemplate tmpl = parse_template(read_file(tpath), tpath.stem().string());
    const SlotLexicon lexicon = SlotLexicon::load(input(c_.templates.lexicon_path));
    const std::uint64_t base = derive_seed(seed, "template");
    std::string out;
    for (std::size_t i = 0; i < c_.generate.template_fills; ++i) {
      const std::uint64_t s = derive_seed(base, i);
      std::string text = fill_template(tmpl, lexicon, s);
      while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
      out += json{{"id", indexed_id("template", i)},
                  {"template", tmpl.name},
                  {"seed", s},
                  {"text", text}}
                 .dump() +
             "\n";
    }
    o.write("template_transcripts.jsonl", out);
  }
  if (c_.llm.enabled) {
    std::vector<std::vector<DialogueTurn>> examples;
    for (const auto& line : read_lines(input(c_.llm.examples_path))) {
      if (line.empty()) continue;
      examples.push_back(transcript_from_json(json::parse(line)).turns);
    }
    const std::size_t per = std::min(c_.llm.examples_per_prompt, examples.size());
    std::size_t next_example = 0;
    auto pick = [&] {
      std::vector<std::vector<DialogueTurn>> chosen;
      for (std::size_t i = 0; i < per; ++i) {
        chosen.push_back(examples[next_example++ % examples.size()]);
      }
      return chosen;
    };

    struct Bundle {
      std::string id;
      std::string scenario;
      std::string prompt;
    };
    std::vector<Bundle> bundles;
    for (const auto& sc : load_scenarios(input(c_.llm.scenarios_dir))) {
      bundles.push_back({"scenario-" + sc.name, sc.name,
                         build_fewshot_prompt(sc.instruction, pick(), "")});
    }
    for (std::size_t i = 0; i < c_.llm.conditions.size(); ++i) {
      bundles.push_back({indexed_id("condition", i), c_.llm.conditions[i],
                         build_fewshot_prompt(default_fewshot_instruction(), pick(),
                                              c_.llm.conditions[i])});
    }

    const std::uint64_t base = derive_seed(seed, "llm");
    std::string prompts;
    std::vector<GenerationRequest> requests;
    std::map<std::string, std::string> scenario_of;
    for (std::size_t i = 0; i < bundles.size(); ++i) {
      const auto& b = bundles[i];
      prompts += json{{"id", b.id}, {"prompt", b.prompt}, {"scenario", b.scenario},
                      {"seed", derive_seed(base, i)}}
                     .dump() +
                 "\n";
      requests.push_back({c_.llm.model, b.prompt, c_.llm.temperature, c_.llm.max_tokens,
                          {}, b.id});
      scenario_of[b.id] = b.scenario;
    }
    o.write("prompts.jsonl", prompts);

    auto provider = make_provider(c_.llm, opt_.base_dir);
    const BatchResult result = generate_batch(requests, *provider, c_.llm.batch);
    std::string transcripts, errors;
    std::size_t attempts = 0, prompt_tokens = 0, completion_tokens = 0, parse_failures = 0;
    for (const auto& r : result.responses) {
      attempts += r.attempts;
      prompt_tokens += r.usage.prompt_tokens;
      completion_tokens += r.usage.completion_tokens;
      try {
        TranscriptRecord rec = parse_transcript_response(r.completion);
        rec.scenario = scenario_of.at(r.request_id);
        json j = transcript_to_json(rec);
        j["id"] = r.request_id;
        transcripts += j.dump() + "\n";
      } catch (const ParseError& e) {
        ++parse_failures;
        errors += json{{"request_id", r.request_id}, {"message", e.what()},
                       {"attempts", r.attempts}, {"permanent", true}}
                      .dump() +
                  "\n";
      }
    }
    for (const auto& e : result.errors) {
      attempts += e.attempts;
      errors += json{{"request_id", e.request_id}, {"message", e.message},
                     {"attempts", e.attempts}, {"permanent", e.permanent}}
                    .dump() +
                "\n";
    }
    o.write("transcripts.jsonl", transcripts);
    o.write("llm_errors.jsonl", errors);
    o.write_json("llm_usage.json", {{"requests", requests.size()},
                                    {"responses", result.responses.size()},
                                    {"failed", result.errors.size()},
                                    {"unparseable", parse_failures},
                                    {"attempts", attempts},
                                    {"prompt_tokens", prompt_tokens},
                                    {"completion_tokens", completion_tokens}});
  }
}

void Runner::evaluate(StageOutputs& o, std::uint64_t seed) {
  const PreprocessConfig pre = effective_preprocess(c_, opt_.base_dir);
  const auto test_docs = read_token_docs(art("preprocess/test.jsonl"));
  const auto validation_docs = read_token_docs(art("preprocess/validation.jsonl"));
  const auto train_docs = read_token_docs(art("preprocess/train.jsonl"));
  // Held-out text when there is some, else the training split.
  const auto& eval_docs = !test_docs.empty() ? test_docs : train_docs;
  const std::string eval_split = !test_docs.empty() ? "test" : "train";

  json perplexity = {{"split", eval_split}};
  if (c_.lm.enabled) {
    const NGramModel lm = ngram_from_json(json::parse(read_file(art("train/lm.json"))));
    perplexity["lm"] = {{"perplexity", score_perplexity(lm, tokens_of(eval_docs))},
                        {"train_perplexity", score_perplexity(lm, tokens_of(train_docs))}};
    if (!validation_docs.empty()) {
      perplexity["lm"]["validation_perplexity"] =
          score_perplexity(lm, tokens_of(validation_docs));
    }
  }
  if (c_.mixture.enabled) {
    const MixtureModel m = mixture_from_json(json::parse(read_file(art("train/mixture.json"))));
    std::size_t tokens = 0;
    for (const auto& d : eval_docs) tokens += d.tokens.size() + 1;
    const double ll = mixture_log_likelihood(m, tokens_of(eval_docs));
    perplexity["mixture"] = {{"log_likelihood", ll},
                             {"perplexity", std::exp(-ll / static_cast<double>(tokens))}};
  }
  o.write_json("perplexity.json", perplexity);

  // BLEU: every generated text against the held-out sentences.
  std::vector<TokenSequence> refs =
      tokens_of(read_token_docs(art("preprocess/" + eval_split + "_sentences.jsonl")));
  if (refs.empty()) refs = tokens_of(eval_docs);
  std::vector<std::pair<std::string, std::vector<TokenSequence>>> sources;
  for (const char* name : {"lm", "gan", "mixture"}) {
    const fs::path p = art(std::string("generate/") + name + "_samples.jsonl");
    if (fs::exists(p)) sources.emplace_back(name, tokens_of(read_token_docs(p)));
  }
  if (fs::exists(art("generate/template_transcripts.jsonl"))) {
    std::vector<TokenSequence> cands;
    for (const auto& line : read_lines(art("generate/template_transcripts.jsonl"))) {
      if (!line.empty()) cands.push_back(tokenize(json::parse(line).at("text").get<std::string>(), pre));
    }
    sources.emplace_back("template", std::move(cands));
  }
  if (fs::exists(art("generate/transcripts.jsonl"))) {
    std::vector<TokenSequence> cands;
    for (const auto& line : read_lines(art("generate/transcripts.jsonl"))) {
      if (line.empty()) continue;
      cands.push_back(tokenize(render_turns(transcript_from_json(json::parse(line)).turns), pre));
    }
    sources.emplace_back("llm", std::move(cands));
  }
  json bleu_json = json::object();
  std::ostringstream bleu_csv;
  bleu_csv.precision(17);
  bleu_csv << "source,candidates,micro_bleu,macro_bleu,bp";
  for (std::size_t n = 1; n <= c_.evaluate.bleu.max_order; ++n) bleu_csv << ",p" << n;
  bleu_csv << '\n';
  for (const auto& [name, cands] : sources) {
    std::vector<BleuPair> pairs;
    for (const auto& cand : cands) {
      if (!cand.empty()) pairs.push_back({cand, refs});
    }
    if (pairs.empty()) continue;
    const CorpusBleu cb = corpus_bleu(pairs, c_.evaluate.bleu);
    bleu_json[name] = {{"candidates", pairs.size()},
                       {"micro", bleu_to_json(cb.micro)},
                       {"macro", cb.macro}};
    bleu_csv << name << ',' << pairs.size() << ',' << cb.micro.bleu << ',' << cb.macro << ','
             << cb.micro.bp;
    for (double p : cb.micro.precisions) bleu_csv << ',' << p;
    bleu_csv << '\n';
  }
  o.write_json("bleu.json", {{"references", refs.size()}, {"sources", bleu_json}});
  o.write("bleu.csv", bleu_csv.str());

  // WER: noise channels over the held-out documents.
  const Vocabulary vocab = vocabulary_from_text(read_file(art("preprocess/vocab.txt")));
  json wer_rows = json::array();
  std::ostringstream wer_csv;
  wer_csv.precision(17);
  wer_csv << "channel,substitution,deletion,insertion,total_rate,wer,S,D,I,N\n";
  for (const auto& ch : c_.evaluate.wer_channels) {
    const std::uint64_t base = derive_seed(seed, "wer/" + ch.name);
    std::vector<std::pair<TokenSequence, TokenSequence>> pairs;
    for (std::size_t i = 0; i < eval_docs.size(); ++i) {
      if (eval_docs[i].tokens.empty()) continue;
      pairs.emplace_back(eval_docs[i].tokens,
                         corrupt_transcript(eval_docs[i].tokens, ch.rates, vocab,
                                            derive_seed(base, i)));
    }
    if (pairs.empty()) continue;
    const CorpusWer cw = corpus_wer(pairs);
    wer_rows.push_back({{"channel", ch.name},
                        {"substitution", ch.rates.substitution},
                        {"deletion", ch.rates.deletion},
                        {"insertion", ch.rates.insertion},
                        {"total_rate", ch.rates.total()},
                        {"wer", cw.wer},
                        {"S", cw.substitutions},
                        {"D", cw.deletions},
                        {"I", cw.insertions},
                        {"N", cw.reference_length}});
    wer_csv << ch.name << ',' << ch.rates.substitution << ',' << ch.rates.deletion << ','
            << ch.rates.insertion << ',' << ch.rates.total() << ',' << cw.wer << ','
            << cw.substitutions << ',' << cw.deletions << ',' << cw.insertions << ','
            << cw.reference_length << '\n';
  }
  o.write_json("wer.json", wer_rows);
  o.write("wer.csv", wer_csv.str());
}

void Runner::report(StageOutputs& o, std::uint64_t) {
  json r;
  r["corpus"] = json::parse(read_file(art("stats/stats.json")));
  r["perplexity"] = json::parse(read_file(art("evaluate/perplexity.json")));
  r["bleu"] = json::parse(read_file(art("evaluate/bleu.json")));
  r["wer"] = json::parse(read_file(art("evaluate/wer.json")));
  if (fs::exists(art("train/gan.json"))) {
    const GanTrainState s = gan_state_from_json(json::parse(read_file(art("train/gan.json"))));
    if (!s.curves.nll.empty()) {
      r["gan"] = {{"epochs", s.epochs_completed()},
                  {"first_nll", s.curves.nll.front()},
                  {"final_nll", s.curves.nll.back()},
                  {"final_generator_loss", s.curves.generator_loss.back()},
                  {"final_discriminator_loss", s.curves.discriminator_loss.back()}};
    }
  }
  if (fs::exists(art("train/mixture.json"))) {
    const MixtureModel m = mixture_from_json(json::parse(read_file(art("train/mixture.json"))));
    json mj = {{"components", m.K()}, {"weights", m.weights}};
    if (!m.curve.lower_bound.empty()) {
      mj["iterations"] = m.curve.lower_bound.size();
      mj["final_lower_bound"] = m.curve.lower_bound.back();
      mj["final_log_likelihood"] = m.curve.log_likelihood.back();
    }
    r["mixture"] = mj;
  }
  if (fs::exists(art("generate/llm_usage.json"))) {
    r["llm"] = json::parse(read_file(art("generate/llm_usage.json")));
  }
  o.write_json("report.json", r);
}

}  // namespace

RunManifest run_pipeline(const PipelineConfig& config, const PipelineOptions& options) {
  Runner runner(config, options);
  return runner.run();
}

}  // namespace clinsynth
