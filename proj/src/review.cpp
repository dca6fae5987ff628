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

#include "clinsynth/review.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "clinsynth/error.hpp"
#include "clinsynth/io.hpp"

namespace clinsynth {

const char* to_string(Criterion c) {
  switch (c) {
    case Criterion::kCoherence:
      return "coherence";
    case Criterion::kClinicalRelevance:
      return "clinical_relevance";
    case Criterion::kFormatAdherence:
      return "format_adherence";
  }
  return "?";
}

int ReviewRecord::score(Criterion c) const {
  switch (c) {
    case Criterion::kCoherence:
      return coherence;
    case Criterion::kClinicalRelevance:
      return clinical_relevance;
    case Criterion::kFormatAdherence:
      return format_adherence;
  }
  return 0;
}

void ReviewRecord::validate() const {
  if (note_id.empty()) throw ValidationError("review has an empty note id");
  if (reviewer_id.empty()) throw ValidationError("review has an empty reviewer id");
  for (Criterion c : kCriteria) {
    const int s = score(c);
    if (s < kMinScore || s > kMaxScore) {
      throw ValidationError(std::string(to_string(c)) + " score " + std::to_string(s) +
                            " outside 1..5");
    }
  }
}

nlohmann::json review_to_json(const ReviewRecord& r) {
  return {{"note_id", r.note_id},
          {"reviewer_id", r.reviewer_id},
          {"coherence", r.coherence},
          {"clinical_relevance", r.clinical_relevance},
          {"format_adherence", r.format_adherence},
          {"comments", r.comments},
          {"timestamp", r.timestamp}};
}

ReviewRecord review_from_json(const nlohmann::json& obj) {
  ReviewRecord r;
  r.note_id = obj.at("note_id").get<std::string>();
  r.reviewer_id = obj.at("reviewer_id").get<std::string>();
  r.coherence = obj.at("coherence").get<int>();
  r.clinical_relevance = obj.at("clinical_relevance").get<int>();
  r.format_adherence = obj.at("format_adherence").get<int>();
  r.comments = obj.value("comments", "");
  r.timestamp = obj.value("timestamp", "");
  return r;
}

std::vector<ReviewRecord> load_reviews(const std::filesystem::path& path) {
  std::vector<ReviewRecord> out;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(review_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }
  }
  return out;
}

ReviewStore::ReviewStore(std::filesystem::path path, std::set<std::string> known_notes)
    : path_(std::move(path)), known_notes_(std::move(known_notes)) {
  if (!std::filesystem::exists(path_)) return;
  for (auto& r : load_reviews(path_)) {
    seen_.emplace(r.note_id, r.reviewer_id);
    records_.push_back(std::move(r));
  }
}

const ReviewRecord& ReviewStore::record(ReviewRecord review) {
  review.validate();
  if (!known_notes_.count(review.note_id)) {
    throw ValidationError("unknown note id \"" + review.note_id + "\"");
  }
  if (seen_.count({review.note_id, review.reviewer_id})) {
    throw ValidationError("duplicate review of \"" + review.note_id + "\" by \"" +
                          review.reviewer_id + "\"");
  }
  append_line(path_, review_to_json(review).dump());
  seen_.emplace(review.note_id, review.reviewer_id);
  records_.push_back(std::move(review));
  return records_.back();
}

double cohen_kappa(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw ValidationError("kappa needs two equal-length, nonempty label lists");
  }
  constexpr int kLevels = kMaxScore - kMinScore + 1;
  std::array<double, kLevels> pa{}, pb{};
  double agree = 0.0;
  const double n = static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < kMinScore || a[i] > kMaxScore || b[i] < kMinScore || b[i] > kMaxScore) {
      throw ValidationError("kappa labels must lie in 1..5");
    }
    pa[a[i] - kMinScore] += 1.0 / n;
    pb[b[i] - kMinScore] += 1.0 / n;
    if (a[i] == b[i]) agree += 1.0;
  }
  const double po = agree / n;
  double pe = 0.0;
  for (int k = 0; k < kLevels; ++k) pe += pa[k] * pb[k];
  if (std::abs(1.0 - pe) < 1e-12) return 1.0;
  return (po - pe) / (1.0 - pe);
}

ReviewSummary summarize_reviews(const std::vector<ReviewRecord>& records) {
  if (records.empty()) throw ValidationError("no reviews to summarize");
  ReviewSummary s;
  s.records = records.size();
  const double n = static_cast<double>(records.size());
  // reviewer -> note -> record
  std::map<std::string, std::map<std::string, const ReviewRecord*>> by_reviewer;
  for (const auto& r : records) {
    r.validate();
    ++s.per_reviewer[r.reviewer_id];
    by_reviewer[r.reviewer_id][r.note_id] = &r;
  }
  for (std::size_t c = 0; c < kCriteria.size(); ++c) {
    double sum = 0.0;
    for (const auto& r : records) sum += r.score(kCriteria[c]);
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& r : records) {
      const double d = r.score(kCriteria[c]) - mean;
      ss += d * d;
    }
    s.criteria[c] = {mean, std::sqrt(ss / n)};
  }
  for (auto a = by_reviewer.begin(); a != by_reviewer.end(); ++a) {
    for (auto b = std::next(a); b != by_reviewer.end(); ++b) {
      std::vector<const ReviewRecord*> ra, rb;
      for (const auto& [note, rec] : a->second) {
        auto it = b->second.find(note);
        if (it == b->second.end()) continue;
        ra.push_back(rec);
        rb.push_back(it->second);
      }
      if (ra.empty()) continue;
      PairAgreement pair{a->first, b->first, ra.size(), {}};
      for (std::size_t c = 0; c < kCriteria.size(); ++c) {
        std::vector<int> la, lb;
        for (std::size_t i = 0; i < ra.size(); ++i) {
          la.push_back(ra[i]->score(kCriteria[c]));
          lb.push_back(rb[i]->score(kCriteria[c]));
        }
        pair.kappa[c] = cohen_kappa(la, lb);
      }
      s.agreement.push_back(std::move(pair));
    }
  }
  return s;
}

nlohmann::json review_summary_to_json(const ReviewSummary& s) {
  nlohmann::json criteria = nlohmann::json::object();
  for (std::size_t c = 0; c < kCriteria.size(); ++c) {
    criteria[to_string(kCriteria[c])] = {{"mean", s.criteria[c].mean},
                                         {"stddev", s.criteria[c].stddev}};
  }
  nlohmann::json agreement = nlohmann::json::array();
  for (const auto& p : s.agreement) {
    nlohmann::json kappa = nlohmann::json::object();
    for (std::size_t c = 0; c < kCriteria.size(); ++c) {
      kappa[to_string(kCriteria[c])] = p.kappa[c];
    }
    agreement.push_back({{"reviewer_a", p.reviewer_a},
                         {"reviewer_b", p.reviewer_b},
                         {"shared_notes", p.shared_notes},
                         {"kappa", kappa}});
  }
  return {{"records", s.records},
          {"criteria", criteria},
          {"per_reviewer", s.per_reviewer},
          {"agreement", agreement}};
}

std::string review_summary_csv(const ReviewSummary& s) {
  std::ostringstream out;
  out.precision(17);
  out << "criterion,mean,stddev\n";
  for (std::size_t c = 0; c < kCriteria.size(); ++c) {
    out << to_string(kCriteria[c]) << ',' << s.criteria[c].mean << ','
        << s.criteria[c].stddev << '\n';
  }
  out << "\nreviewer_a,reviewer_b,shared_notes";
  for (Criterion c : kCriteria) out << ",kappa_" << to_string(c);
  out << '\n';
  for (const auto& p : s.agreement) {
    out << p.reviewer_a << ',' << p.reviewer_b << ',' << p.shared_notes;
    for (double k : p.kappa) out << ',' << k;
    out << '\n';
  }
  return out.str();
}

}  // namespace clinsynth
