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

#include "clinsynth/llm_client.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>
#include <thread>

#include "clinsynth/error.hpp"
#include "clinsynth/io.hpp"
#include "clinsynth/rng.hpp"
#include "httplib.h"

namespace clinsynth {

using nlohmann::json;

json request_to_wire(const GenerationRequest& request) {
  return {{"model", request.model},
          {"prompt", request.prompt},
          {"temperature", request.temperature},
          {"max_tokens", request.max_tokens},
          {"stop", request.stop}};
}

ReplyStatus classify_http_status(int status) {
  if (status >= 200 && status < 300) return ReplyStatus::kOk;
  if (status == 408 || status == 429 || status >= 500) return ReplyStatus::kTransient;
  return ReplyStatus::kPermanent;
}

std::string resolve_auth_token(const std::string& configured) {
  if (const char* env = std::getenv("CLINSYNTH_API_TOKEN"); env && *env) return env;
  return configured;
}

HttpProvider::HttpProvider(HttpProviderConfig config) : config_(std::move(config)) {
  const auto scheme = config_.endpoint.find("://");
  if (scheme == std::string::npos) {
    throw ValidationError("endpoint must be an absolute URL: " + config_.endpoint);
  }
  const auto path = config_.endpoint.find('/', scheme + 3);
  origin_ = config_.endpoint.substr(0, path);
  path_ = path == std::string::npos ? "/" : config_.endpoint.substr(path);
}

ProviderReply HttpProvider::complete(const GenerationRequest& request) {
  ProviderReply reply;
  reply.request_id = request.request_id;
  httplib::Client client(origin_);
  const auto secs = static_cast<time_t>(config_.timeout_seconds);
  const auto usecs = static_cast<time_t>((config_.timeout_seconds - secs) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  httplib::Headers headers;
  const std::string token = resolve_auth_token(config_.auth_token);
  if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);
  headers.emplace("X-Request-Id", request.request_id);
  auto res = client.Post(path_, headers, request_to_wire(request).dump(),
                         "application/json");
  if (!res) {
    reply.status = ReplyStatus::kTransient;
    reply.error = "transport error: " + httplib::to_string(res.error());
    return reply;
  }
  reply.status = classify_http_status(res->status);
  if (reply.status != ReplyStatus::kOk) {
    reply.error = "HTTP " + std::to_string(res->status) + ": " + res->body;
    return reply;
  }
  try {
    const json body = json::parse(res->body);
    reply.completion = body.at("completion").get<std::string>();
    if (body.contains("usage") && body["usage"].is_object()) {
      reply.usage.prompt_tokens = body["usage"].value("prompt_tokens", std::size_t{0});
      reply.usage.completion_tokens =
          body["usage"].value("completion_tokens", std::size_t{0});
    }
  } catch (const json::exception& e) {
    reply.status = ReplyStatus::kPermanent;
    reply.error = std::string("malformed provider response: ") + e.what();
  }
  return reply;
}

MockProvider::MockProvider(MockProviderOptions options) : options_(std::move(options)) {}

std::string MockProvider::fixture_key(std::string_view prompt) {
  return hex64(fnv1a64(prompt));
}

std::string MockProvider::default_completion(std::string_view prompt) {
  static const char* kOpenings[] = {
      "I've been feeling unwell for about a week and it is getting worse.",
      "I came in because my symptoms have not improved since my last visit.",
      "I've had trouble sleeping and I feel tired most of the day.",
  };
  static const char* kQuestions[] = {
      "Let's go through when this started and what makes it better or worse.",
      "Can you tell me about your medical history and any medications you take?",
      "Have you noticed any fever, weight change or shortness of breath?",
  };
  static const char* kPlans[] = {
      "We'll run some basic tests and follow up once the results are back.",
      "I'd like to examine you and then we can discuss treatment options.",
      "Let's start with a short course of treatment and review in two weeks.",
  };
  Rng rng(fnv1a64(prompt));
  std::string out = "Patient: ";
  out += kOpenings[rng.below(3)];
  out += " Clinician: ";
  out += kQuestions[rng.below(3)];
  out += " Patient: It started gradually and nothing seems to help much.";
  out += " Clinician: ";
  out += kPlans[rng.below(3)];
  return out;
}

ProviderReply MockProvider::complete(const GenerationRequest& request) {
  const std::size_t now = ++inflight_;
  std::size_t peak = max_concurrent_.load();
  while (now > peak && !max_concurrent_.compare_exchange_weak(peak, now)) {
  }
  std::size_t call_index;
  {
    std::lock_guard<std::mutex> lock(mu_);
    call_index = calls_[request.request_id]++;
  }
  if (options_.latency.count() > 0) std::this_thread::sleep_for(options_.latency);

  ProviderReply reply;
  reply.request_id = request.request_id;
  auto script = options_.failure_script.find(request.request_id);
  if (script != options_.failure_script.end() && call_index < script->second.size() &&
      script->second[call_index] != ReplyStatus::kOk) {
    reply.status = script->second[call_index];
    reply.error = reply.status == ReplyStatus::kTransient ? "scripted transient failure"
                                                          : "scripted permanent failure";
  } else {
    std::filesystem::path fixture;
    if (!options_.fixtures_dir.empty()) {
      fixture = options_.fixtures_dir / (fixture_key(request.prompt) + ".txt");
    }
    if (!fixture.empty() && std::filesystem::exists(fixture)) {
      reply.completion = read_file(fixture);
    } else {
      reply.completion = default_completion(request.prompt);
    }
    reply.usage.prompt_tokens = split_whitespace(request.prompt).size();
    reply.usage.completion_tokens = split_whitespace(reply.completion).size();
  }
  --inflight_;
  return reply;
}

std::size_t MockProvider::calls(const std::string& request_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = calls_.find(request_id);
  return it == calls_.end() ? 0 : it->second;
}

std::size_t MockProvider::total_calls() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::size_t total = 0;
  for (const auto& [id, n] : calls_) total += n;
  return total;
}

BatchResult generate_batch(const std::vector<GenerationRequest>& requests,
                           Provider& provider, const BatchOptions& options) {
  if (options.max_inflight < 1) throw ValidationError("max_inflight must be at least 1");
  std::set<std::string> ids;
  for (const auto& r : requests) {
    if (r.prompt.empty()) {
      throw ValidationError("request \"" + r.request_id + "\" has an empty prompt");
    }
    if (!ids.insert(r.request_id).second) {
      throw ValidationError("duplicate request id \"" + r.request_id + "\"");
    }
  }

  std::mutex mu;
  std::map<std::string, GenerationResponse> responses;
  std::map<std::string, GenerationError> errors;
  std::atomic<std::size_t> next{0};

  auto run_one = [&](const GenerationRequest& request) {
    auto backoff = options.initial_backoff;
    GenerationError failure{request.request_id, "", 0, false};
    for (std::size_t attempt = 1; attempt <= options.max_retries + 1; ++attempt) {
      const auto start = std::chrono::steady_clock::now();
      ProviderReply reply;
      try {
        reply = provider.complete(request);
      } catch (const std::exception& e) {
        reply.status = ReplyStatus::kTransient;
        reply.error = e.what();
      }
      const auto elapsed = std::chrono::steady_clock::now() - start;
      if (reply.status == ReplyStatus::kOk && reply.request_id != request.request_id) {
        reply.status = ReplyStatus::kTransient;
        reply.error = "reply for unexpected request id \"" + reply.request_id + "\"";
      }
      failure.attempts = attempt;
      if (reply.status == ReplyStatus::kOk) {
        GenerationResponse resp;
        resp.request_id = request.request_id;
        resp.completion = std::move(reply.completion);
        resp.usage = reply.usage;
        resp.latency_ms =
            std::chrono::duration<double, std::milli>(elapsed).count();
        resp.attempts = attempt;
        std::lock_guard<std::mutex> lock(mu);
        // First delivery wins.
        responses.emplace(resp.request_id, std::move(resp));
        return;
      }
      failure.message = reply.error;
      if (reply.status == ReplyStatus::kPermanent) {
        failure.permanent = true;
        break;
      }
      if (attempt <= options.max_retries && backoff.count() > 0) {
        std::this_thread::sleep_for(backoff);
        backoff = std::min(options.max_backoff,
                           std::chrono::milliseconds(static_cast<long long>(
                               std::ceil(backoff.count() * options.backoff_multiplier))));
      }
    }
    std::lock_guard<std::mutex> lock(mu);
    errors.emplace(failure.request_id, std::move(failure));
  };

  const std::size_t workers = std::min(options.max_inflight, requests.size());
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < requests.size(); i = next++) {
          run_one(requests[i]);
        }
      });
    }
  }

  BatchResult result;
  for (auto& [id, r] : responses) result.responses.push_back(std::move(r));
  for (auto& [id, e] : errors) result.errors.push_back(std::move(e));
  return result;
}

namespace {

std::string trim_copy(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

TranscriptRecord parse_transcript_response(std::string_view completion) {
  static constexpr std::string_view kPatient = "Patient:";
  static constexpr std::string_view kClinician = "Clinician:";
  struct Marker {
    std::size_t pos;
    Speaker speaker;
    std::size_t len;
  };
  std::vector<Marker> markers;
  for (std::size_t pos = 0; pos < completion.size();) {
    const std::size_t p = completion.find(kPatient, pos);
    const std::size_t c = completion.find(kClinician, pos);
    if (p == std::string_view::npos && c == std::string_view::npos) break;
    if (p < c) {
      markers.push_back({p, Speaker::kPatient, kPatient.size()});
      pos = p + kPatient.size();
    } else {
      markers.push_back({c, Speaker::kClinician, kClinician.size()});
      pos = c + kClinician.size();
    }
  }
  if (markers.empty()) {
    throw ParseError("no Patient:/Clinician: marker in completion: " +
                         std::string(completion),
                     0);
  }
  TranscriptRecord record;
  record.provenance = Provenance::kLlm;
  record.preamble = trim_copy(completion.substr(0, markers.front().pos));
  for (std::size_t i = 0; i < markers.size(); ++i) {
    const std::size_t begin = markers[i].pos + markers[i].len;
    const std::size_t end = i + 1 < markers.size() ? markers[i + 1].pos : completion.size();
    std::string text = trim_copy(completion.substr(begin, end - begin));
    if (text.empty()) continue;
    record.turns.push_back({markers[i].speaker, std::move(text)});
  }
  if (record.turns.empty()) {
    throw ParseError("completion has speaker markers but no utterances: " +
                         std::string(completion),
                     0);
  }
  return record;
}

}  // namespace clinsynth
