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

// clinsynth command-line front end.

#include <chrono>
#include <ctime>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "clinsynth/adversarial.hpp"
#include "clinsynth/corpus.hpp"
#include "clinsynth/error.hpp"
#include "clinsynth/io.hpp"
#include "clinsynth/latent_mixture.hpp"
#include "clinsynth/llm_client.hpp"
#include "clinsynth/metrics.hpp"
#include "clinsynth/ngram.hpp"
#include "clinsynth/pipeline.hpp"
#include "clinsynth/preprocess.hpp"
#include "clinsynth/review.hpp"
#include "clinsynth/rng.hpp"
#include "clinsynth/template_gen.hpp"
#include "clinsynth/transcript.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace clinsynth;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

struct Env {
  PipelineConfig config;
  fs::path base_dir = CLINSYNTH_DATA_DIR;
  std::uint64_t seed = 0;
  fs::path out_dir;

  fs::path output(const std::string& p) const {
    if (p.empty() || p == "-") return p;
    return out_dir.empty() ? fs::path(p) : resolve_path(out_dir, p);
  }
};

Env make_env(const Globals& g) {
  Env env;
  if (!g.config_path.empty()) {
    env.config = load_pipeline_config(g.config_path);
    env.base_dir = fs::absolute(g.config_path).parent_path();
  }
  if (g.seed) env.config.seed = *g.seed;
  if (!g.out_dir.empty()) env.config.out_dir = g.out_dir;
  env.seed = env.config.seed;
  env.out_dir = g.out_dir;
  return env;
}

// "-" or empty writes to stdout.
void emit(const fs::path& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  write_file(path, text);
}

std::string now_utc() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Doc {
  std::string id;
  TokenSequence tokens;
};

// .jsonl files hold {"id", "tokens"} objects; anything else is one
// whitespace-tokenized sequence per line.
std::vector<Doc> read_docs(const fs::path& path) {
  std::vector<Doc> out;
  const bool jsonl = path.extension() == ".jsonl";
  std::size_t n = 0;
  for (const auto& line : read_lines(path)) {
    ++n;
    if (jsonl) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const json j = json::parse(line);
        out.push_back({j.value("id", "line-" + std::to_string(n)),
                       j.at("tokens").get<TokenSequence>()});
      } catch (const json::exception& e) {
        throw ParseError(path.string() + ": line " + std::to_string(n) + ": " + e.what(), n);
      }
    } else {
      out.push_back({"line-" + std::to_string(n), split_whitespace(line)});
    }
  }
  return out;
}

std::vector<TokenSequence> seqs(const std::vector<Doc>& docs) {
  std::vector<TokenSequence> out;
  for (const auto& d : docs) out.push_back(d.tokens);
  return out;
}

std::string docs_jsonl(const std::vector<Doc>& docs) {
  std::string out;
  for (const auto& d : docs) out += json{{"id", d.id}, {"tokens", d.tokens}}.dump() + "\n";
  return out;
}

std::string id_for(const std::string& prefix, std::size_t i) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s-%04zu", prefix.c_str(), i);
  return buf;
}

PreprocessConfig preprocess_from(const Env& env) {
  PreprocessConfig p = env.config.preprocess.config;
  if (!env.config.preprocess.abbreviations_file.empty()) {
    p.abbreviations =
        load_abbreviations(resolve_path(env.base_dir, env.config.preprocess.abbreviations_file));
  }
  return p;
}

void add_sampler_options(CLI::App* cmd, SamplerConfig& s, std::string& top_k) {
  cmd->add_option("--temperature", s.temperature, "Softmax temperature")->capture_default_str();
  cmd->add_option("--top-k", top_k, "Keep the k most probable tokens, or \"all\"");
  cmd->add_option("--top-p", s.top_p, "Nucleus mass to keep");
  cmd->add_option("--max-length", s.max_length, "Maximum tokens per sample")
      ->capture_default_str();
}

void apply_top_k(SamplerConfig& s, const std::string& top_k) {
  if (top_k.empty() || top_k == "all") return;
  try {
    s.top_k = std::stoul(top_k);
  } catch (const std::exception&) {
    throw ValidationError("--top-k must be an integer or \"all\"");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic clinical transcript generation and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals globals;
  app.add_option("--config", globals.config_path, "Pipeline config (JSON)");
  app.add_option("--seed", globals.seed, "Global seed; overrides the config");
  app.add_option("--out-dir", globals.out_dir,
                 "Output directory; relative output paths are placed here");

  std::function<void(const Env&)> action;
  auto on = [&](CLI::App* cmd, std::function<void(const Env&)> fn) {
    cmd->callback([&action, fn] { action = fn; });
  };

  // ingest --------------------------------------------------------------
  struct {
    std::string input, format = "jsonl", output = "-";
    std::vector<std::string> columns;
  } ing;
  auto* ingest_cmd = app.add_subcommand("ingest", "Load notes from JSONL or CSV");
  ingest_cmd->add_option("input", ing.input, "Record file")->required();
  ingest_cmd->add_option("--format", ing.format, "jsonl or csv")->capture_default_str();
  ingest_cmd->add_option("--column", ing.columns, "CSV mapping SOURCE=field (repeatable)");
  ingest_cmd->add_option("-o,--output", ing.output, "Notes JSONL")->capture_default_str();
  on(ingest_cmd, [&](const Env& env) {
    ColumnMap map = env.config.corpus.column_map;
    if (!ing.columns.empty()) {
      map.clear();
      for (const auto& c : ing.columns) {
        const auto eq = c.find('=');
        if (eq == std::string::npos) throw ValidationError("--column expects SOURCE=field");
        map[c.substr(0, eq)] = c.substr(eq + 1);
      }
    }
    const Corpus corpus = ingest(ing.input, parse_record_format(ing.format), map);
    emit(env.output(ing.output), to_jsonl(corpus));
    std::cerr << "ingested " << corpus.size() << " notes\n";
  });

  // stats ---------------------------------------------------------------
  struct {
    std::string input, output = "-", csv;
    std::size_t bucket = 32;
  } st;
  auto* stats_cmd = app.add_subcommand("stats", "Category counts and length histogram");
  stats_cmd->add_option("input", st.input, "Notes JSONL")->required();
  stats_cmd->add_option("--bucket-width", st.bucket, "Histogram bucket width in words")
      ->capture_default_str();
  stats_cmd->add_option("-o,--output", st.output, "Stats JSON")->capture_default_str();
  stats_cmd->add_option("--csv", st.csv, "Histogram CSV");
  on(stats_cmd, [&](const Env& env) {
    const CorpusStats s = compute_stats(ingest(st.input, RecordFormat::kJsonl), st.bucket);
    emit(env.output(st.output), stats_to_json(s).dump(2) + "\n");
    if (!st.csv.empty()) emit(env.output(st.csv), histogram_csv(s));
  });

  // split ---------------------------------------------------------------
  struct {
    std::string input, output_dir = "split";
    SplitRatios ratios{0.8, 0.1, 0.1};
  } sp;
  auto* split_cmd = app.add_subcommand("split", "Seeded train/validation/test split");
  split_cmd->add_option("input", sp.input, "Notes JSONL")->required();
  split_cmd->add_option("--train", sp.ratios[0])->capture_default_str();
  split_cmd->add_option("--validation", sp.ratios[1])->capture_default_str();
  split_cmd->add_option("--test", sp.ratios[2])->capture_default_str();
  split_cmd->add_option("-o,--output-dir", sp.output_dir)->capture_default_str();
  on(split_cmd, [&](const Env& env) {
    const Corpus split =
        split_corpus(ingest(sp.input, RecordFormat::kJsonl), sp.ratios, derive_seed(env.seed, "split"));
    const fs::path dir = env.output(sp.output_dir);
    write_file(dir / "notes.jsonl", to_jsonl(split));
    for (Split s : {Split::kTrain, Split::kValidation, Split::kTest}) {
      const auto notes = split.subset(s);
      write_file(dir / (std::string(to_string(s)) + ".jsonl"),
                 to_jsonl(Corpus(notes, split.manifest())));
      std::cerr << to_string(s) << ": " << notes.size() << "\n";
    }
  });

  // preprocess ----------------------------------------------------------
  struct {
    std::string input, output = "-", vocab;
    bool sentences = false;
  } pp;
  auto* pre_cmd = app.add_subcommand("preprocess", "Clean, segment and tokenize notes");
  pre_cmd->add_option("input", pp.input, "Notes JSONL")->required();
  pre_cmd->add_option("-o,--output", pp.output, "Token JSONL")->capture_default_str();
  pre_cmd->add_option("--vocab", pp.vocab, "Also write the vocabulary here");
  pre_cmd->add_flag("--sentences", pp.sentences, "One record per sentence");
  on(pre_cmd, [&](const Env& env) {
    const PreprocessConfig cfg = preprocess_from(env);
    std::vector<Doc> docs;
    std::size_t rejected = 0;
    for (const auto& note : ingest(pp.input, RecordFormat::kJsonl).notes()) {
      auto cleaned = clean_note(note, cfg);
      auto* n = std::get_if<ClinicalNote>(&cleaned);
      if (!n) {
        ++rejected;
        continue;
      }
      if (pp.sentences) {
        const auto sents = segment_sentences(n->text, cfg);
        for (std::size_t i = 0; i < sents.size(); ++i) {
          docs.push_back({n->id + "#" + std::to_string(i), tokenize(sents[i], cfg)});
        }
      } else {
        docs.push_back({n->id, tokenize(n->text, cfg)});
      }
    }
    emit(env.output(pp.output), docs_jsonl(docs));
    if (!pp.vocab.empty()) {
      emit(env.output(pp.vocab), vocabulary_to_text(build_vocabulary(seqs(docs), cfg)));
    }
    std::cerr << docs.size() << " records, " << rejected << " notes rejected\n";
  });

  // train-lm ------------------------------------------------------------
  struct {
    std::string input, output = "-", vocab;
    std::size_t order = 3;
    double alpha = 0.1;
    bool no_padding = false;
  } tl;
  auto* train_cmd = app.add_subcommand("train-lm", "Fit an additive-smoothing n-gram model");
  train_cmd->add_option("input", tl.input, "Token JSONL or whitespace text")->required();
  train_cmd->add_option("--order", tl.order)->capture_default_str();
  train_cmd->add_option("--alpha", tl.alpha)->capture_default_str();
  train_cmd->add_option("--vocab", tl.vocab, "Vocabulary file (default: built from input)");
  train_cmd->add_flag("--no-padding", tl.no_padding, "Score only in-sequence windows");
  train_cmd->add_option("-o,--output", tl.output, "Model JSON")->capture_default_str();
  on(train_cmd, [&](const Env& env) {
    const auto data = seqs(read_docs(tl.input));
    const Vocabulary vocab = tl.vocab.empty()
                                 ? build_vocabulary(data, preprocess_from(env))
                                 : vocabulary_from_text(read_file(tl.vocab));
    const NGramModel m = train_ngram(data, tl.order, tl.alpha, vocab, !tl.no_padding);
    emit(env.output(tl.output), ngram_to_json(m).dump() + "\n");
  });

  // perplexity ----------------------------------------------------------
  struct {
    std::string model, input;
  } px;
  auto* ppl_cmd = app.add_subcommand("perplexity", "Score token sequences under a model");
  ppl_cmd->add_option("--model", px.model, "Model JSON")->required();
  ppl_cmd->add_option("input", px.input, "Token JSONL or whitespace text")->required();
  on(ppl_cmd, [&](const Env&) {
    const NGramModel m = ngram_from_json(json::parse(read_file(px.model)));
    const auto data = seqs(read_docs(px.input));
    std::vector<std::vector<TokenId>> ids;
    std::size_t events = 0;
    double lp = 0.0;
    for (const auto& s : data) {
      ids.push_back(m.vocabulary().encode(s));
      const auto r = m.log_probability(ids.back());
      lp += r.log_prob;
      events += r.events;
    }
    std::cout << json{{"perplexity", score_perplexity_ids(m, ids)},
                      {"log_prob", lp},
                      {"events", events},
                      {"sequences", data.size()}}
                     .dump(2)
              << "\n";
  });

  // sample --------------------------------------------------------------
  struct {
    std::string model, output = "-", top_k;
    std::size_t count = 10;
    SamplerConfig sampler;
  } sm;
  auto* sample_cmd = app.add_subcommand("sample", "Draw sequences from an n-gram model");
  sample_cmd->add_option("--model", sm.model, "Model JSON")->required();
  sample_cmd->add_option("-n,--count", sm.count)->capture_default_str();
  add_sampler_options(sample_cmd, sm.sampler, sm.top_k);
  sample_cmd->add_option("-o,--output", sm.output, "Token JSONL")->capture_default_str();
  on(sample_cmd, [&](const Env& env) {
    apply_top_k(sm.sampler, sm.top_k);
    sm.sampler.validate();
    const NGramModel m = ngram_from_json(json::parse(read_file(sm.model)));
    const std::uint64_t base = derive_seed(env.seed, "sample");
    std::vector<Doc> out;
    for (std::size_t i = 0; i < sm.count; ++i) {
      SamplerConfig s = sm.sampler;
      s.seed = derive_seed(base, i);
      out.push_back({id_for("sample", i), sample_sequence(m, s)});
    }
    emit(env.output(sm.output), docs_jsonl(out));
  });

  // bleu ----------------------------------------------------------------
  struct {
    std::string candidates, output = "-", csv;
    std::vector<std::string> references;
    std::size_t max_order = 4;
    bool smoothing = false;
  } bl;
  auto* bleu_cmd = app.add_subcommand("bleu", "Per-pair and corpus BLEU");
  bleu_cmd->add_option("--candidates", bl.candidates, "One candidate per line")->required();
  bleu_cmd->add_option("--references", bl.references,
                       "Reference file(s), line-aligned with candidates")
      ->required();
  bleu_cmd->add_option("--max-order", bl.max_order)->capture_default_str();
  bleu_cmd->add_flag("--smoothing", bl.smoothing, "Add-one smoothing for n >= 2");
  bleu_cmd->add_option("-o,--output", bl.output, "Report JSON")->capture_default_str();
  bleu_cmd->add_option("--csv", bl.csv, "Per-pair CSV");
  on(bleu_cmd, [&](const Env& env) {
    const auto cands = read_docs(bl.candidates);
    std::vector<std::vector<Doc>> refs;
    for (const auto& r : bl.references) {
      refs.push_back(read_docs(r));
      if (refs.back().size() != cands.size()) {
        throw ValidationError(r + ": expected " + std::to_string(cands.size()) + " lines");
      }
    }
    std::vector<BleuPair> pairs;
    for (std::size_t i = 0; i < cands.size(); ++i) {
      BleuPair p{cands[i].tokens, {}};
      for (const auto& r : refs) p.references.push_back(r[i].tokens);
      pairs.push_back(std::move(p));
    }
    const BleuOptions opts{bl.max_order, std::nullopt, bl.smoothing};
    const CorpusBleu cb = corpus_bleu(pairs, opts);
    json per = json::array();
    for (const auto& r : cb.pairs) per.push_back(bleu_to_json(r));
    emit(env.output(bl.output),
         json{{"micro", bleu_to_json(cb.micro)}, {"macro", cb.macro}, {"pairs", per}}.dump(2) +
             "\n");
    if (!bl.csv.empty()) {
      std::ostringstream csv;
      csv.precision(17);
      csv << "pair,bleu,bp,c,r\n";
      for (std::size_t i = 0; i < cb.pairs.size(); ++i) {
        const auto& r = cb.pairs[i];
        csv << i + 1 << ',' << r.bleu << ',' << r.bp << ',' << r.candidate_length << ','
            << r.reference_length << '\n';
      }
      emit(env.output(bl.csv), csv.str());
    }
  });

  // wer -----------------------------------------------------------------
  struct {
    std::string reference, hypothesis, output = "-", csv;
    bool alignment = false;
  } wr;
  auto* wer_cmd = app.add_subcommand("wer", "Word error rate with alignments");
  wer_cmd->add_option("--reference", wr.reference, "One reference per line")->required();
  wer_cmd->add_option("--hypothesis", wr.hypothesis, "One hypothesis per line")->required();
  wer_cmd->add_flag("--alignment", wr.alignment, "Include per-pair alignments");
  wer_cmd->add_option("-o,--output", wr.output, "Report JSON")->capture_default_str();
  wer_cmd->add_option("--csv", wr.csv, "Per-pair CSV");
  on(wer_cmd, [&](const Env& env) {
    const auto refs = read_docs(wr.reference);
    const auto hyps = read_docs(wr.hypothesis);
    if (refs.size() != hyps.size()) {
      throw ValidationError("reference and hypothesis files differ in line count");
    }
    std::vector<std::pair<TokenSequence, TokenSequence>> pairs;
    for (std::size_t i = 0; i < refs.size(); ++i) pairs.emplace_back(refs[i].tokens, hyps[i].tokens);
    const CorpusWer cw = corpus_wer(pairs);
    json per = json::array();
    for (const auto& r : cw.pairs) per.push_back(wer_to_json(r, wr.alignment));
    emit(env.output(wr.output), json{{"wer", cw.wer},
                                     {"S", cw.substitutions},
                                     {"D", cw.deletions},
                                     {"I", cw.insertions},
                                     {"N", cw.reference_length},
                                     {"pairs", per}}
                                        .dump(2) +
                                    "\n");
    if (!wr.csv.empty()) {
      std::ostringstream csv;
      csv.precision(17);
      csv << "pair,wer,S,D,I,N\n";
      for (std::size_t i = 0; i < cw.pairs.size(); ++i) {
        const auto& r = cw.pairs[i];
        csv << i + 1 << ',' << r.wer << ',' << r.substitutions << ',' << r.deletions << ','
            << r.insertions << ',' << r.reference_length << '\n';
      }
      emit(env.output(wr.csv), csv.str());
    }
  });

  // corrupt -------------------------------------------------------------
  struct {
    std::string input, output = "-";
    CorruptionRates rates{0.05, 0.0, 0.0};
  } cr;
  auto* corrupt_cmd = app.add_subcommand("corrupt", "Pass references through a noise channel");
  corrupt_cmd->add_option("input", cr.input, "One reference per line")->required();
  corrupt_cmd->add_option("--substitution", cr.rates.substitution)->capture_default_str();
  corrupt_cmd->add_option("--deletion", cr.rates.deletion)->capture_default_str();
  corrupt_cmd->add_option("--insertion", cr.rates.insertion)->capture_default_str();
  corrupt_cmd->add_option("-o,--output", cr.output, "Hypotheses, one per line")
      ->capture_default_str();
  on(corrupt_cmd, [&](const Env& env) {
    cr.rates.validate();
    const auto refs = read_docs(cr.input);
    std::set<std::string> types;
    for (const auto& d : refs) types.insert(d.tokens.begin(), d.tokens.end());
    const Vocabulary noise(std::vector<std::string>(types.begin(), types.end()));
    const std::uint64_t base = derive_seed(env.seed, "corrupt");
    std::string out;
    for (std::size_t i = 0; i < refs.size(); ++i) {
      out += join(corrupt_transcript(refs[i].tokens, cr.rates, noise, derive_seed(base, i)), " ");
      out += '\n';
    }
    emit(env.output(cr.output), out);
  });

  // template-gen --------------------------------------------------------
  struct {
    std::string tmpl, lexicon, output = "-";
    std::size_t count = 5;
  } tg;
  auto* tmpl_cmd = app.add_subcommand("template-gen", "Fill a placeholder template");
  tmpl_cmd->add_option("--template", tg.tmpl, "Template text file");
  tmpl_cmd->add_option("--lexicon", tg.lexicon, "Slot lexicon JSON");
  tmpl_cmd->add_option("-n,--count", tg.count)->capture_default_str();
  tmpl_cmd->add_option("-o,--output", tg.output, "JSONL of fills")->capture_default_str();
  on(tmpl_cmd, [&](const Env& env) {
    const fs::path tpath = tg.tmpl.empty()
                               ? resolve_path(env.base_dir, env.config.templates.template_path)
                               : fs::path(tg.tmpl);
    const fs::path lpath = tg.lexicon.empty()
                               ? resolve_path(env.base_dir, env.config.templates.lexicon_path)
                               : fs::path(tg.lexicon);
    const TranscriptTemplate t = parse_template(read_file(tpath), tpath.stem().string());
    const SlotLexicon lex = SlotLexicon::load(lpath);
    const std::uint64_t base = derive_seed(env.seed, "template");
    std::string out;
    for (std::size_t i = 0; i < tg.count; ++i) {
      const std::uint64_t s = derive_seed(base, i);
      out += json{{"id", id_for("template", i)}, {"template", t.name}, {"seed", s},
                  {"text", fill_template(t, lex, s)}}
                 .dump() +
             "\n";
    }
    emit(env.output(tg.output), out);
  });

  // prompt-build --------------------------------------------------------
  struct {
    std::string instruction, scenarios, examples, output = "-";
    std::vector<std::string> conditions;
    std::size_t per_prompt = 2;
  } pb;
  auto* prompt_cmd = app.add_subcommand("prompt-build", "Assemble few-shot prompt bundles");
  prompt_cmd->add_option("--instruction", pb.instruction,
                         "Instruction text (default: the built-in [Condition] prompt)");
  prompt_cmd->add_option("--scenarios", pb.scenarios, "Directory of *.txt instructions");
  prompt_cmd->add_option("--condition", pb.conditions, "Condition text (repeatable)");
  prompt_cmd->add_option("--examples", pb.examples, "Example transcripts JSONL");
  prompt_cmd->add_option("--per-prompt", pb.per_prompt, "Examples per prompt")
      ->capture_default_str();
  prompt_cmd->add_option("-o,--output", pb.output, "Prompt JSONL {id, prompt, scenario, seed}")
      ->capture_default_str();
  on(prompt_cmd, [&](const Env& env) {
    std::vector<std::vector<DialogueTurn>> examples;
    const fs::path ex = pb.examples.empty()
                            ? resolve_path(env.base_dir, env.config.llm.examples_path)
                            : fs::path(pb.examples);
    for (const auto& line : read_lines(ex)) {
      if (!line.empty()) examples.push_back(transcript_from_json(json::parse(line)).turns);
    }
    std::size_t next = 0;
    auto pick = [&] {
      std::vector<std::vector<DialogueTurn>> chosen;
      for (std::size_t i = 0; i < std::min(pb.per_prompt, examples.size()); ++i) {
        chosen.push_back(examples[next++ % examples.size()]);
      }
      return chosen;
    };
    const std::uint64_t base = derive_seed(env.seed, "prompt");
    std::string out;
    std::size_t index = 0;
    auto add = [&](const std::string& id, const std::string& scenario, const std::string& prompt) {
      out += json{{"id", id}, {"prompt", prompt}, {"scenario", scenario},
                  {"seed", derive_seed(base, index++)}}
                 .dump() +
             "\n";
    };
    if (!pb.scenarios.empty()) {
      for (const auto& sc : load_scenarios(pb.scenarios)) {
        add("scenario-" + sc.name, sc.name, build_fewshot_prompt(sc.instruction, pick(), ""));
      }
    }
    const std::string instr =
        pb.instruction.empty() ? default_fewshot_instruction() : pb.instruction;
    const auto conditions =
        pb.conditions.empty() && pb.scenarios.empty() ? env.config.llm.conditions : pb.conditions;
    for (std::size_t i = 0; i < conditions.size(); ++i) {
      add(id_for("condition", i), conditions[i], build_fewshot_prompt(instr, pick(), conditions[i]));
    }
    emit(env.output(pb.output), out);
  });

  // llm-gen -------------------------------------------------------------
  struct {
    std::string prompts, output = "-", errors;
    std::optional<std::string> provider, endpoint, model, fixtures;
    std::optional<std::size_t> max_inflight, max_retries;
  } lg;
  auto* llm_cmd = app.add_subcommand("llm-gen", "Send prompt bundles to a provider");
  llm_cmd->add_option("prompts", lg.prompts, "Prompt JSONL from prompt-build")->required();
  llm_cmd->add_option("--provider", lg.provider, "mock or http");
  llm_cmd->add_option("--endpoint", lg.endpoint, "HTTP endpoint URL");
  llm_cmd->add_option("--model", lg.model, "Model id");
  llm_cmd->add_option("--fixtures", lg.fixtures, "Mock fixture directory");
  llm_cmd->add_option("--max-inflight", lg.max_inflight);
  llm_cmd->add_option("--max-retries", lg.max_retries);
  llm_cmd->add_option("-o,--output", lg.output, "Transcript JSONL")->capture_default_str();
  llm_cmd->add_option("--errors", lg.errors, "Failed requests JSONL");
  on(llm_cmd, [&](const Env& env) {
    LlmSection llm = env.config.llm;
    if (lg.provider) llm.provider = *lg.provider;
    if (lg.endpoint) llm.endpoint = *lg.endpoint;
    if (lg.model) llm.model = *lg.model;
    if (lg.fixtures) llm.fixtures_dir = fs::absolute(*lg.fixtures).string();
    if (lg.max_inflight) llm.batch.max_inflight = *lg.max_inflight;
    if (lg.max_retries) llm.batch.max_retries = *lg.max_retries;
    std::vector<GenerationRequest> requests;
    std::map<std::string, std::string> scenario_of;
    for (const auto& line : read_lines(lg.prompts)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      const std::string id = j.at("id").get<std::string>();
      requests.push_back({llm.model, j.at("prompt").get<std::string>(), llm.temperature,
                          llm.max_tokens, {}, id});
      scenario_of[id] = j.value("scenario", "");
    }
    auto provider = make_provider(llm, env.base_dir);
    const BatchResult result = generate_batch(requests, *provider, llm.batch);
    std::string out, errs;
    for (const auto& r : result.responses) {
      try {
        TranscriptRecord rec = parse_transcript_response(r.completion);
        rec.scenario = scenario_of[r.request_id];
        json j = transcript_to_json(rec);
        j["id"] = r.request_id;
        j["attempts"] = r.attempts;
        out += j.dump() + "\n";
      } catch (const ParseError& e) {
        errs += json{{"request_id", r.request_id}, {"message", e.what()}}.dump() + "\n";
      }
    }
    for (const auto& e : result.errors) {
      errs += json{{"request_id", e.request_id}, {"message", e.message},
                   {"attempts", e.attempts}, {"permanent", e.permanent}}
                  .dump() +
              "\n";
    }
    emit(env.output(lg.output), out);
    if (!lg.errors.empty()) emit(env.output(lg.errors), errs);
    std::cerr << result.responses.size() << " responses, " << result.errors.size()
              << " failures\n";
  });

  // gan-train -----------------------------------------------------------
  struct {
    std::string input, output = "-", curves;
    AdversarialConfig cfg;
  } gt;
  auto* gan_cmd = app.add_subcommand("gan-train", "Adversarial training with REINFORCE");
  gan_cmd->add_option("input", gt.input, "Token JSONL or whitespace text")->required();
  gan_cmd->add_option("--epochs", gt.cfg.epochs)->capture_default_str();
  gan_cmd->add_option("--batch-size", gt.cfg.batch_size)->capture_default_str();
  gan_cmd->add_option("--g-steps", gt.cfg.g_steps)->capture_default_str();
  gan_cmd->add_option("--d-steps", gt.cfg.d_steps)->capture_default_str();
  gan_cmd->add_option("--generator-lr", gt.cfg.generator_lr)->capture_default_str();
  gan_cmd->add_option("--discriminator-lr", gt.cfg.discriminator_lr)->capture_default_str();
  gan_cmd->add_option("--generator-order", gt.cfg.generator_order)->capture_default_str();
  gan_cmd->add_option("--max-length", gt.cfg.max_length)->capture_default_str();
  gan_cmd->add_option("-o,--output", gt.output, "Checkpoint JSON")->capture_default_str();
  gan_cmd->add_option("--curves", gt.curves, "Per-epoch curves CSV");
  on(gan_cmd, [&](const Env& env) {
    gt.cfg.seed = derive_seed(env.seed, "gan");
    const GanTrainState s = train_adversarial(seqs(read_docs(gt.input)), gt.cfg);
    emit(env.output(gt.output), gan_state_to_json(s).dump() + "\n");
    if (!gt.curves.empty()) emit(env.output(gt.curves), gan_curves_csv(s.curves));
  });

  // em-train ------------------------------------------------------------
  struct {
    std::string input, output = "-", curve;
    EmOptions opts;
  } et;
  auto* em_cmd = app.add_subcommand("em-train", "Fit a mixture of n-gram models by EM");
  em_cmd->add_option("input", et.input, "Token JSONL or whitespace text")->required();
  em_cmd->add_option("-k,--components", et.opts.components)->capture_default_str();
  em_cmd->add_option("--alpha", et.opts.alpha)->capture_default_str();
  em_cmd->add_option("--iterations", et.opts.iterations)->capture_default_str();
  em_cmd->add_option("--order", et.opts.order)->capture_default_str();
  em_cmd->add_option("-o,--output", et.output, "Model JSON")->capture_default_str();
  em_cmd->add_option("--curve", et.curve, "Training curve CSV");
  on(em_cmd, [&](const Env& env) {
    et.opts.seed = derive_seed(env.seed, "mixture");
    const MixtureModel m = fit_em(seqs(read_docs(et.input)), et.opts);
    emit(env.output(et.output), mixture_to_json(m).dump() + "\n");
    if (!et.curve.empty()) emit(env.output(et.curve), mixture_curve_csv(m.curve));
  });

  // review --------------------------------------------------------------
  struct {
    std::string transcripts, store = "reviews.jsonl", reviewer, scores;
  } rv;
  auto* review_cmd = app.add_subcommand(
      "review", "Score transcripts 1-5 on the review criteria");
  review_cmd->add_option("transcripts", rv.transcripts, "Transcript JSONL with ids")->required();
  review_cmd->add_option("--store", rv.store, "Append-only review JSONL")->capture_default_str();
  review_cmd->add_option("--reviewer", rv.reviewer, "Reviewer id")->required();
  review_cmd->add_option("--scores", rv.scores,
                         "Prepared scores: lines of 'note_id c r f [comment]'");
  on(review_cmd, [&](const Env& env) {
    std::vector<std::pair<std::string, std::string>> items;
    for (const auto& line : read_lines(rv.transcripts)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      const std::string id = j.at("id").get<std::string>();
      std::string text = j.contains("text") ? j["text"].get<std::string>()
                                            : render_turns(transcript_from_json(j).turns);
      items.emplace_back(id, std::move(text));
    }
    std::set<std::string> ids;
    for (const auto& [id, t] : items) ids.insert(id);
    ReviewStore store(env.output(rv.store), ids);

    auto parse_scores = [&](std::istringstream& in, ReviewRecord& r) {
      if (!(in >> r.coherence >> r.clinical_relevance >> r.format_adherence)) {
        throw ValidationError("expected three integer scores");
      }
      std::getline(in >> std::ws, r.comments);
    };
    std::size_t stored = 0;
    if (!rv.scores.empty()) {
      for (const auto& line : read_lines(rv.scores)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
        std::istringstream in(line);
        ReviewRecord r;
        in >> r.note_id;
        parse_scores(in, r);
        r.reviewer_id = rv.reviewer;
        r.timestamp = now_utc();
        store.record(std::move(r));
        ++stored;
      }
    } else {
      for (const auto& [id, text] : items) {
        std::cout << "\n== " << id << " ==\n" << text << "\n"
                  << "scores (coherence relevance format [comment]), blank to skip: "
                  << std::flush;
        std::string line;
        if (!std::getline(std::cin, line)) break;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream in(line);
        ReviewRecord r;
        r.note_id = id;
        r.reviewer_id = rv.reviewer;
        parse_scores(in, r);
        r.timestamp = now_utc();
        store.record(std::move(r));
        ++stored;
      }
    }
    std::cerr << stored << " reviews recorded\n";
  });

  // summarize-reviews ---------------------------------------------------
  struct {
    std::string input, output = "-", csv;
  } sr;
  auto* sum_cmd = app.add_subcommand("summarize-reviews", "Means, spread and Cohen's kappa");
  sum_cmd->add_option("input", sr.input, "Review JSONL")->required();
  sum_cmd->add_option("-o,--output", sr.output, "Summary JSON")->capture_default_str();
  sum_cmd->add_option("--csv", sr.csv, "Summary CSV");
  on(sum_cmd, [&](const Env& env) {
    const ReviewSummary s = summarize_reviews(load_reviews(sr.input));
    emit(env.output(sr.output), review_summary_to_json(s).dump(2) + "\n");
    if (!sr.csv.empty()) emit(env.output(sr.csv), review_summary_csv(s));
  });

  // pipeline ------------------------------------------------------------
  struct {
    bool force = false, print_config = false;
  } pl;
  auto* pipe_cmd = app.add_subcommand("pipeline", "Run every stage into --out-dir");
  pipe_cmd->add_flag("--force", pl.force, "Ignore stage stamps");
  pipe_cmd->add_flag("--print-config", pl.print_config,
                     "Print the effective config and exit");
  on(pipe_cmd, [&](const Env& env) {
    if (pl.print_config) {
      std::cout << pipeline_config_to_json(env.config, true).dump(2) << "\n";
      return;
    }
    PipelineOptions opts;
    opts.base_dir = env.base_dir;
    opts.force = pl.force;
    opts.log = &std::cerr;
    const RunManifest m = run_pipeline(env.config, opts);
    std::cerr << "run " << m.run_id << " complete; artifacts in " << env.config.out_dir << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    action(make_env(globals));
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
