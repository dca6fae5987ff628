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

#ifndef CLINSYNTH_CORPUS_HPP_
#define CLINSYNTH_CORPUS_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace clinsynth {

enum class Split { kTrain, kValidation, kTest };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

struct ClinicalNote {
  std::string id;
  std::string category;
  std::string text;
  std::string source;
  std::optional<Split> split;

  bool operator==(const ClinicalNote&) const = default;
};

struct CorpusManifest {
  std::uint64_t seed = 0;
  std::vector<std::string> sources;
  std::size_t count = 0;

  bool operator==(const CorpusManifest&) const = default;
};

// Ordered, id-unique collection of notes. Construction validates ids, so a
// Corpus value always satisfies the uniqueness and count invariants.
class Corpus {
 public:
  Corpus() = default;
  Corpus(std::vector<ClinicalNote> notes, CorpusManifest manifest);

  const std::vector<ClinicalNote>& notes() const { return notes_; }
  const CorpusManifest& manifest() const { return manifest_; }
  std::size_t size() const { return notes_.size(); }
  bool empty() const { return notes_.empty(); }

  /// Notes whose split equals `split`, in corpus order.
  std::vector<ClinicalNote> subset(Split split) const;

  bool operator==(const Corpus&) const = default;

 private:
  std::vector<ClinicalNote> notes_;
  CorpusManifest manifest_;
};

enum class RecordFormat { kJsonl, kCsv };

RecordFormat parse_record_format(std::string_view name);

/// Source column name -> note field ("id", "category", "text", "source").
using ColumnMap = std::map<std::string, std::string>;

ColumnMap default_column_map();

/// Loads notes from a JSONL or CSV record file. Errors carry the 1-based
/// line number of the offending record; duplicate ids are rejected.
Corpus ingest(const std::filesystem::path& path, RecordFormat format,
              const ColumnMap& column_map = default_column_map());

Corpus ingest_jsonl_text(std::string_view text, const std::string& source);
Corpus ingest_csv_text(std::string_view text, const ColumnMap& column_map,
                       const std::string& source);

nlohmann::json note_to_json(const ClinicalNote& note);
std::string to_jsonl(const Corpus& corpus);
void write_jsonl(const Corpus& corpus, const std::filesystem::path& path);

/// RFC 4180 style reader: quoted fields may contain commas, doubled quotes
/// and newlines. Returns rows with the physical line each row started on.
struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> fields;
};
std::vector<CsvRow> parse_csv(std::string_view text);

using SplitRatios = std::array<double, 3>;

/// Seeded shuffle followed by contiguous slicing into validation and test
/// blocks of floor(ratio * n) notes; the remainder goes to train.
Corpus split_corpus(const Corpus& corpus, const SplitRatios& ratios,
                    std::uint64_t seed);

struct HistogramBucket {
  std::size_t lo = 0;  // inclusive
  std::size_t hi = 0;  // exclusive
  std::size_t count = 0;
};

struct CorpusStats {
  std::map<std::string, std::size_t> categories;
  std::vector<HistogramBucket> histogram;
  double mean = 0.0;
  double stddev = 0.0;
};

/// Word counts are whitespace token counts of the raw text. The standard
/// deviation is the population value.
CorpusStats compute_stats(const Corpus& corpus, std::size_t bucket_width);

nlohmann::json stats_to_json(const CorpusStats& stats);
std::string histogram_csv(const CorpusStats& stats);

struct FixtureOptions {
  std::size_t count = 10000;
  double mean_words = 256.0;
  double stddev_words = 50.0;
  std::uint64_t seed = 1;
};

/// Synthetic MIMIC-shaped notes whose word counts are drawn from
/// Normal(mean, stddev), clamped to at least one word.
Corpus generate_fixture_corpus(const FixtureOptions& options);

}  // namespace clinsynth

#endif  // CLINSYNTH_CORPUS_HPP_
