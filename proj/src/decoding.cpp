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

#include "clinsynth/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "clinsynth/error.hpp"

namespace clinsynth {

void SamplerConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ValidationError("temperature must be positive");
  }
  if (top_k && *top_k < 1) throw ValidationError("top_k must be at least 1");
  if (top_p) {
    if (!(*top_p > 0.0 && *top_p <= 1.0)) {
      throw ValidationError("top_p must lie in (0, 1]");
    }
    if (top_k) throw ValidationError("top_k and top_p are mutually exclusive");
  }
  if (max_length < 1) throw ValidationError("max_length must be at least 1");
}

nlohmann::json sampler_config_to_json(const SamplerConfig& config) {
  nlohmann::json obj = {{"temperature", config.temperature},
                        {"max_length", config.max_length},
                        {"seed", config.seed}};
  obj["top_k"] = config.top_k ? nlohmann::json(*config.top_k) : nlohmann::json("all");
  obj["top_p"] = config.top_p ? nlohmann::json(*config.top_p) : nlohmann::json(nullptr);
  return obj;
}

SamplerConfig sampler_config_from_json(const nlohmann::json& obj) {
  SamplerConfig config;
  config.temperature = obj.value("temperature", config.temperature);
  config.max_length = obj.value("max_length", config.max_length);
  config.seed = obj.value("seed", config.seed);
  if (obj.contains("top_k") && !obj["top_k"].is_null()) {
    const auto& k = obj["top_k"];
    if (k.is_string()) {
      if (k.get<std::string>() != "all") {
        throw ValidationError("top_k must be an integer or \"all\"");
      }
    } else {
      config.top_k = k.get<std::size_t>();
    }
  }
  if (obj.contains("top_p") && !obj["top_p"].is_null()) {
    config.top_p = obj["top_p"].get<double>();
  }
  config.validate();
  return config;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::vector<double> apply_temperature(std::span<const double> distribution,
                                      double temperature) {
  if (!(temperature > 0.0)) {
    throw ValidationError("temperature must be positive");
  }
  std::vector<double> out(distribution.size(), 0.0);
  if (distribution.empty()) return out;
  if (temperature < kGreedyTemperature) {
    out[argmax(distribution)] = 1.0;
    return out;
  }
  if (temperature == 1.0) return {distribution.begin(), distribution.end()};
  const double log_max = std::log(distribution[argmax(distribution)]);
  double total = 0.0;
  for (std::size_t i = 0; i < distribution.size(); ++i) {
    if (distribution[i] <= 0.0) continue;
    out[i] = std::exp((std::log(distribution[i]) - log_max) / temperature);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  return out;
}

namespace {

std::vector<std::size_t> ranked_indices(std::span<const double> distribution) {
  std::vector<std::size_t> order(distribution.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return distribution[a] > distribution[b];
  });
  return order;
}

std::vector<double> keep_prefix(std::span<const double> distribution,
                                const std::vector<std::size_t>& order,
                                std::size_t keep) {
  std::vector<double> out(distribution.size(), 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < keep; ++r) total += distribution[order[r]];
  for (std::size_t r = 0; r < keep; ++r) {
    out[order[r]] = distribution[order[r]] / total;
  }
  return out;
}

}  // namespace

std::vector<double> truncate_top_k(std::span<const double> distribution,
                                   std::optional<std::size_t> k) {
  if (k && *k < 1) throw ValidationError("top_k must be at least 1");
  if (!k || *k >= distribution.size()) {
    return {distribution.begin(), distribution.end()};
  }
  return keep_prefix(distribution, ranked_indices(distribution), *k);
}

std::vector<double> truncate_top_p(std::span<const double> distribution,
                                   double p) {
  if (!(p > 0.0 && p <= 1.0)) throw ValidationError("top_p must lie in (0, 1]");
  const auto order = ranked_indices(distribution);
  double mass = 0.0;
  std::size_t keep = 0;
  while (keep < order.size()) {
    mass += distribution[order[keep]];
    ++keep;
    if (mass >= p - 1e-12) break;
  }
  return keep_prefix(distribution, order, keep);
}

std::vector<double> decode_distribution(std::span<const double> distribution,
                                        const SamplerConfig& config) {
  std::vector<double> scaled = apply_temperature(distribution, config.temperature);
  if (config.top_p) return truncate_top_p(scaled, *config.top_p);
  return truncate_top_k(scaled, config.top_k);
}

}  // namespace clinsynth
