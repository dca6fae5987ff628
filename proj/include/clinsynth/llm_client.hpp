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

#ifndef CLINSYNTH_LLM_CLIENT_HPP_
#define CLINSYNTH_LLM_CLIENT_HPP_

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "clinsynth/transcript.hpp"
#include "json.hpp"

namespace clinsynth {

struct GenerationRequest {
  std::string model;
  std::string prompt;
  double temperature = 0.7;
  std::size_t max_tokens = 512;
  std::vector<std::string> stop;
  std::string request_id;
};

struct TokenUsage {
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
};

struct GenerationResponse {
  std::string request_id;
  std::string completion;
  TokenUsage usage;
  double latency_ms = 0.0;
  std::size_t attempts = 0;
};

struct GenerationError {
  std::string request_id;
  std::string message;
  std::size_t attempts = 0;
  bool permanent = false;
};

enum class ReplyStatus { kOk, kTransient, kPermanent };

struct ProviderReply {
  ReplyStatus status = ReplyStatus::kOk;
  std::string request_id;
  std::string completion;
  TokenUsage usage;
  std::string error;
};

// One completion endpoint. Implementations must be safe to call from
// several threads at once.
class Provider {
 public:
  virtual ~Provider() = default;
  virtual ProviderReply complete(const GenerationRequest& request) = 0;
};

/// Wire body sent to HTTP providers:
///   {"model", "prompt", "temperature", "max_tokens", "stop"}
nlohmann::json request_to_wire(const GenerationRequest& request);

/// Maps an HTTP status to a reply class: 2xx ok, 408/429/5xx transient,
/// other 4xx permanent.
ReplyStatus classify_http_status(int status);

struct HttpProviderConfig {
  /// Full URL, e.g. "http://localhost:8080/v1/complete".
  std::string endpoint;
  std::string auth_token;
  double timeout_seconds = 60.0;
};

/// Token from the config unless CLINSYNTH_API_TOKEN is set in the
/// environment.
std::string resolve_auth_token(const std::string& configured);

// POSTs the wire body and expects {"completion": str, "usage": {...}}.
// Connection failures and timeouts are transient.
class HttpProvider : public Provider {
 public:
  explicit HttpProvider(HttpProviderConfig config);
  ProviderReply complete(const GenerationRequest& request) override;

 private:
  HttpProviderConfig config_;
  std::string origin_;
  std::string path_;
};

struct MockProviderOptions {
  /// Canned completions stored as <hex fnv1a64(prompt)>.txt.
  std::filesystem::path fixtures_dir;
  std::chrono::milliseconds latency{0};
  /// Per request id, statuses returned on successive calls before the
  /// request succeeds.
  std::map<std::string, std::vector<ReplyStatus>> failure_script;
};

// Offline provider. Known prompts get their fixture file; unknown prompts
// get a fixed dialogue fill seeded by the prompt hash. Records call counts
// and the peak number of concurrent calls.
class MockProvider : public Provider {
 public:
  explicit MockProvider(MockProviderOptions options = {});

  ProviderReply complete(const GenerationRequest& request) override;

  std::size_t calls(const std::string& request_id) const;
  std::size_t total_calls() const;
  std::size_t max_concurrent() const { return max_concurrent_.load(); }

  static std::string fixture_key(std::string_view prompt);
  static std::string default_completion(std::string_view prompt);

 private:
  MockProviderOptions options_;
  mutable std::mutex mu_;
  std::map<std::string, std::size_t> calls_;
  std::atomic<std::size_t> inflight_{0};
  std::atomic<std::size_t> max_concurrent_{0};
};

struct BatchOptions {
  std::size_t max_retries = 3;
  std::size_t max_inflight = 4;
  std::chrono::milliseconds initial_backoff{200};
  double backoff_multiplier = 2.0;
  std::chrono::milliseconds max_backoff{10000};
};

struct BatchResult {
  /// Sorted by request id.
  std::vector<GenerationResponse> responses;
  std::vector<GenerationError> errors;
};

/// Runs every request with at most max_inflight outstanding, retrying
/// transient failures up to max_retries times with exponential backoff.
/// Failures are reported per request; the batch never aborts. Duplicate
/// request ids are a ValidationError.
BatchResult generate_batch(const std::vector<GenerationRequest>& requests,
                           Provider& provider, const BatchOptions& options);

/// Splits a completion on "Patient:" / "Clinician:" markers. Text before
/// the first marker is kept as the preamble; empty turns are dropped.
/// Throws ParseError when no marker is present.
TranscriptRecord parse_transcript_response(std::string_view completion);

}  // namespace clinsynth

#endif  // CLINSYNTH_LLM_CLIENT_HPP_
