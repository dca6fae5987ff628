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

#ifndef CLINSYNTH_REVIEW_HPP_
#define CLINSYNTH_REVIEW_HPP_

#include <array>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace clinsynth {

inline constexpr int kMinScore = 1;
inline constexpr int kMaxScore = 5;

enum class Criterion { kCoherence, kClinicalRelevance, kFormatAdherence };
inline constexpr std::array<Criterion, 3> kCriteria = {
    Criterion::kCoherence, Criterion::kClinicalRelevance, Criterion::kFormatAdherence};
const char* to_string(Criterion c);

// One reviewer's 1-5 Likert scores for one synthetic note.
struct ReviewRecord {
  std::string note_id;
  std::string reviewer_id;
  int coherence = 0;
  int clinical_relevance = 0;
  int format_adherence = 0;
  std::string comments;
  /// ISO-8601, supplied by the caller so stores stay deterministic.
  std::string timestamp;

  int score(Criterion c) const;
  /// Throws ValidationError on empty ids or scores outside 1..5.
  void validate() const;
  bool operator==(const ReviewRecord&) const = default;
};

nlohmann::json review_to_json(const ReviewRecord& r);
ReviewRecord review_from_json(const nlohmann::json& obj);

// Append-only JSONL store bound to one batch of note ids. Existing records
// are loaded on open so duplicate checks survive restarts.
class ReviewStore {
 public:
  ReviewStore(std::filesystem::path path, std::set<std::string> known_notes);

  /// Rejects unknown notes and repeated (note, reviewer) pairs,
  /// then appends one line and flushes.
  const ReviewRecord& record(ReviewRecord review);

  const std::vector<ReviewRecord>& records() const { return records_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::set<std::string> known_notes_;
  std::set<std::pair<std::string, std::string>> seen_;
  std::vector<ReviewRecord> records_;
};

std::vector<ReviewRecord> load_reviews(const std::filesystem::path& path);

/// Cohen's kappa on paired labels from 1..5. When expected agreement is 1
/// (both raters constant and equal) kappa is defined as 1.
double cohen_kappa(const std::vector<int>& a, const std::vector<int>& b);

struct CriterionSummary {
  double mean = 0.0;
  /// Population standard deviation.
  double stddev = 0.0;
};

struct PairAgreement {
  std::string reviewer_a;
  std::string reviewer_b;
  std::size_t shared_notes = 0;
  /// Indexed like kCriteria.
  std::array<double, 3> kappa{};
};

struct ReviewSummary {
  std::size_t records = 0;
  std::array<CriterionSummary, 3> criteria{};
  std::map<std::string, std::size_t> per_reviewer;
  /// Pairs with at least one shared note, ordered by reviewer ids.
  std::vector<PairAgreement> agreement;
};

/// Throws ValidationError on empty input.
ReviewSummary summarize_reviews(const std::vector<ReviewRecord>& records);

nlohmann::json review_summary_to_json(const ReviewSummary& summary);
/// Rows: criterion,mean,stddev followed by reviewer_a,reviewer_b,... kappa rows.
std::string review_summary_csv(const ReviewSummary& summary);

}  // namespace clinsynth

#endif  // CLINSYNTH_REVIEW_HPP_
