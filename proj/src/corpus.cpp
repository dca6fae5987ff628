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

#include "clinsynth/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "clinsynth/error.hpp"
#include "clinsynth/io.hpp"
#include "clinsynth/rng.hpp"

namespace clinsynth {

using nlohmann::json;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kValidation:
      return "validation";
    case Split::kTest:
      return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "validation") return Split::kValidation;
  if (name == "test") return Split::kTest;
  throw ValidationError("unknown split \"" + std::string(name) + "\"");
}

Corpus::Corpus(std::vector<ClinicalNote> notes, CorpusManifest manifest)
    : notes_(std::move(notes)), manifest_(std::move(manifest)) {
  std::set<std::string_view> seen;
  for (const auto& note : notes_) {
    if (note.id.empty()) throw ValidationError("note with empty id");
    if (!seen.insert(note.id).second) {
      throw ValidationError("duplicate note id \"" + note.id + "\"");
    }
  }
  manifest_.count = notes_.size();
}

std::vector<ClinicalNote> Corpus::subset(Split split) const {
  std::vector<ClinicalNote> out;
  for (const auto& note : notes_) {
    if (note.split == split) out.push_back(note);
  }
  return out;
}

RecordFormat parse_record_format(std::string_view name) {
  if (name == "jsonl") return RecordFormat::kJsonl;
  if (name == "csv") return RecordFormat::kCsv;
  throw ValidationError("unknown record format \"" + std::string(name) + "\"");
}

ColumnMap default_column_map() {
  return {{"ROW_ID", "id"}, {"CATEGORY", "category"}, {"TEXT", "text"}};
}

namespace {

std::string line_prefix(std::size_t line) {
  return "line " + std::to_string(line) + ": ";
}

// Rejects a duplicate id with the line it was seen on.
void check_unique(std::set<std::string>& seen, const std::string& id,
                  std::size_t line) {
  if (id.empty()) throw ParseError(line_prefix(line) + "empty id", line);
  if (!seen.insert(id).second) {
    throw ParseError(line_prefix(line) + "duplicate id \"" + id + "\"", line);
  }
}

}  // namespace

Corpus ingest_jsonl_text(std::string_view text, const std::string& source) {
  std::vector<ClinicalNote> notes;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(line_prefix(line_no) + "malformed JSON (" + e.what() + ")",
                       line_no);
    }
    if (!obj.is_object()) {
      throw ParseError(line_prefix(line_no) + "record is not an object", line_no);
    }
    auto field = [&](const char* key, bool required) -> std::string {
      auto it = obj.find(key);
      if (it == obj.end() || it->is_null()) {
        if (required) {
          throw ParseError(line_prefix(line_no) + "missing \"" + key + "\"",
                           line_no);
        }
        return {};
      }
      if (it->is_string()) return it->get<std::string>();
      if (it->is_number_integer()) return std::to_string(it->get<long long>());
      throw ParseError(line_prefix(line_no) + "\"" + key + "\" is not a string",
                       line_no);
    };
    ClinicalNote note;
    note.id = field("id", true);
    note.category = field("category", false);
    note.text = field("text", true);
    note.source = field("source", false);
    if (note.source.empty()) note.source = source;
    std::string split = field("split", false);
    if (!split.empty()) {
      try {
        note.split = parse_split(split);
      } catch (const ValidationError& e) {
        throw ParseError(line_prefix(line_no) + e.what(), line_no);
      }
    }
    check_unique(seen, note.id, line_no);
    notes.push_back(std::move(note));
    if (end == text.size()) break;
  }
  CorpusManifest manifest;
  manifest.sources.push_back(source);
  return Corpus(std::move(notes), std::move(manifest));
}

std::vector<CsvRow> parse_csv(std::string_view text) {
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  std::size_t line = 1;
  row.line = 1;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t quote_line = 0;
  auto end_row = [&] {
    row.fields.push_back(std::move(field));
    field.clear();
    bool blank = row.fields.size() == 1 && row.fields[0].empty();
    if (!blank) rows.push_back(std::move(row));
    row = CsvRow{};
    field_started = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"') {
      if (field_started && !field.empty()) {
        throw ParseError(line_prefix(line) + "stray quote inside field", line);
      }
      in_quotes = true;
      field_started = true;
      quote_line = line;
    } else if (c == ',') {
      row.fields.push_back(std::move(field));
      field.clear();
      field_started = false;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_row();
      ++line;
      row.line = line;
    } else {
      field += c;
      field_started = true;
    }
  }
  if (in_quotes) {
    throw ParseError(line_prefix(quote_line) + "unterminated quoted field",
                     quote_line);
  }
  if (field_started || !row.fields.empty()) end_row();
  return rows;
}

Corpus ingest_csv_text(std::string_view text, const ColumnMap& column_map,
                       const std::string& source) {
  std::vector<CsvRow> rows = parse_csv(text);
  if (rows.empty()) throw ParseError("line 1: missing header row", 1);
  const CsvRow& header = rows.front();
  std::map<std::string, std::size_t> field_column;
  for (std::size_t c = 0; c < header.fields.size(); ++c) {
    auto it = column_map.find(header.fields[c]);
    if (it != column_map.end()) field_column[it->second] = c;
  }
  for (const char* required : {"id", "category", "text"}) {
    if (!field_column.count(required)) {
      throw ValidationError(std::string("column map does not provide \"") +
                            required + "\" from the CSV header");
    }
  }
  std::vector<ClinicalNote> notes;
  std::set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const CsvRow& row = rows[r];
    if (row.fields.size() != header.fields.size()) {
      throw ParseError(line_prefix(row.line) + "expected " +
                           std::to_string(header.fields.size()) +
                           " fields, found " + std::to_string(row.fields.size()),
                       row.line);
    }
    ClinicalNote note;
    note.id = row.fields[field_column["id"]];
    note.category = row.fields[field_column["category"]];
    note.text = row.fields[field_column["text"]];
    note.source = field_column.count("source")
                      ? row.fields[field_column["source"]]
                      : source;
    check_unique(seen, note.id, row.line);
    notes.push_back(std::move(note));
  }
  CorpusManifest manifest;
  manifest.sources.push_back(source);
  return Corpus(std::move(notes), std::move(manifest));
}

Corpus ingest(const std::filesystem::path& path, RecordFormat format,
              const ColumnMap& column_map) {
  if (!std::filesystem::exists(path)) {
    throw IoError("record file not found: " + path.string());
  }
  std::string text = read_file(path);
  if (format == RecordFormat::kJsonl) {
    return ingest_jsonl_text(text, path.string());
  }
  return ingest_csv_text(text, column_map, path.string());
}

json note_to_json(const ClinicalNote& note) {
  json obj = {{"id", note.id},
              {"category", note.category},
              {"text", note.text},
              {"source", note.source}};
  if (note.split) obj["split"] = std::string(to_string(*note.split));
  return obj;
}

std::string to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& note : corpus.notes()) {
    out += note_to_json(note).dump();
    out += '\n';
  }
  return out;
}

void write_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
  write_file(path, to_jsonl(corpus));
}

Corpus split_corpus(const Corpus& corpus, const SplitRatios& ratios,
                    std::uint64_t seed) {
  double sum = 0.0;
  for (double r : ratios) {
    if (r < 0.0 || !std::isfinite(r)) {
      throw ValidationError("split ratios must be nonnegative");
    }
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ValidationError("split ratios must sum to 1 (got " +
                          std::to_string(sum) + ")");
  }
  const std::size_t n = corpus.size();
  // The epsilon keeps products like 0.29 * 100 from flooring to 28.
  auto block = [n](double ratio) {
    return static_cast<std::size_t>(
        std::floor(ratio * static_cast<double>(n) + 1e-9));
  };
  const std::size_t n_valid = block(ratios[1]);
  const std::size_t n_test = block(ratios[2]);
  const std::size_t n_train = n - n_valid - n_test;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<ClinicalNote> notes = corpus.notes();
  for (std::size_t rank = 0; rank < n; ++rank) {
    Split s = rank < n_train             ? Split::kTrain
              : rank < n_train + n_valid ? Split::kValidation
                                         : Split::kTest;
    notes[order[rank]].split = s;
  }
  CorpusManifest manifest = corpus.manifest();
  manifest.seed = seed;
  return Corpus(std::move(notes), std::move(manifest));
}

CorpusStats compute_stats(const Corpus& corpus, std::size_t bucket_width) {
  if (corpus.empty()) throw ValidationError("cannot compute stats of an empty corpus");
  if (bucket_width == 0) throw ValidationError("bucket width must be positive");
  CorpusStats stats;
  std::vector<std::size_t> lengths;
  lengths.reserve(corpus.size());
  for (const auto& note : corpus.notes()) {
    lengths.push_back(split_whitespace(note.text).size());
    ++stats.categories[note.category];
  }
  double sum = 0.0;
  std::size_t max_len = 0;
  for (std::size_t len : lengths) {
    sum += static_cast<double>(len);
    max_len = std::max(max_len, len);
  }
  const double n = static_cast<double>(lengths.size());
  stats.mean = sum / n;
  double sq = 0.0;
  for (std::size_t len : lengths) {
    const double d = static_cast<double>(len) - stats.mean;
    sq += d * d;
  }
  stats.stddev = std::sqrt(sq / n);

  const std::size_t buckets = max_len / bucket_width + 1;
  stats.histogram.resize(buckets);
  for (std::size_t b = 0; b < buckets; ++b) {
    stats.histogram[b].lo = b * bucket_width;
    stats.histogram[b].hi = (b + 1) * bucket_width;
  }
  for (std::size_t len : lengths) ++stats.histogram[len / bucket_width].count;
  return stats;
}

json stats_to_json(const CorpusStats& stats) {
  json hist = json::array();
  for (const auto& b : stats.histogram) {
    hist.push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}});
  }
  json cats = json::object();
  for (const auto& [name, count] : stats.categories) cats[name] = count;
  return {{"mean", stats.mean},
          {"stddev", stats.stddev},
          {"histogram", hist},
          {"categories", cats}};
}

std::string histogram_csv(const CorpusStats& stats) {
  std::ostringstream out;
  out << "lo,hi,count\n";
  for (const auto& b : stats.histogram) {
    out << b.lo << ',' << b.hi << ',' << b.count << '\n';
  }
  return out.str();
}

namespace {

struct CategoryWeight {
  const char* name;
  double weight;
};

// Rough MIMIC-III NOTEEVENTS category proportions.
constexpr CategoryWeight kCategories[] = {
    {"Nursing/other", 0.45}, {"Radiology", 0.26}, {"Nursing", 0.11},
    {"ECG", 0.10},           {"Physician", 0.07}, {"Discharge summary", 0.03},
    {"Echo", 0.025},         {"Respiratory", 0.02}, {"Nutrition", 0.005},
};

constexpr const char* kWords[] = {
    "patient", "denies",    "chest",      "pain",     "shortness",
    "of",      "breath",    "with",       "history",  "hypertension",
    "diabetes", "noted",    "on",         "exam",     "lungs",
    "clear",   "to",        "auscultation", "heart",  "regular",
    "rate",    "and",       "rhythm",     "abdomen",  "soft",
    "nontender", "plan",    "continue",   "current",  "medications",
    "follow",  "up",        "in",         "clinic",   "the",
    "was",     "given",     "for",        "fever",    "cough",
    "stable",  "overnight", "no",         "acute",    "distress",
    "vital",   "signs",     "within",     "normal",   "limits",
};

}  // namespace

Corpus generate_fixture_corpus(const FixtureOptions& options) {
  Rng rng(options.seed);
  std::vector<double> weights;
  for (const auto& c : kCategories) weights.push_back(c.weight);
  constexpr std::size_t kWordCount = sizeof(kWords) / sizeof(kWords[0]);
  std::vector<ClinicalNote> notes;
  notes.reserve(options.count);
  for (std::size_t i = 0; i < options.count; ++i) {
    ClinicalNote note;
    note.id = "fx" + std::to_string(i);
    note.category = kCategories[rng.categorical(weights)].name;
    note.source = "fixture";
    const double drawn = rng.normal(options.mean_words, options.stddev_words);
    const auto words = static_cast<std::size_t>(std::max(1.0, std::round(drawn)));
    for (std::size_t w = 0; w < words; ++w) {
      if (w) note.text += (w % 12 == 0) ? ". " : " ";
      note.text += kWords[rng.below(kWordCount)];
    }
    note.text += '.';
    notes.push_back(std::move(note));
  }
  CorpusManifest manifest;
  manifest.seed = options.seed;
  manifest.sources.push_back("fixture");
  return Corpus(std::move(notes), std::move(manifest));
}

}  // namespace clinsynth
