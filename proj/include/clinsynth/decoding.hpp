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

#ifndef CLINSYNTH_DECODING_HPP_
#define CLINSYNTH_DECODING_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

namespace clinsynth {

/// Below this temperature decoding is greedy.
inline constexpr double kGreedyTemperature = 1e-6;

// Decoding controls shared by every sampler in the library. `top_k` unset
// means "all"; `top_p` is the alternative nucleus truncation and may only be
// set when `top_k` is unset.
struct SamplerConfig {
  double temperature = 1.0;
  std::optional<std::size_t> top_k;
  std::optional<double> top_p;
  std::size_t max_length = 64;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json sampler_config_to_json(const SamplerConfig& config);
SamplerConfig sampler_config_from_json(const nlohmann::json& obj);

/// Sharpens or flattens a distribution: out_i ∝ p_i^(1/T). Computed in the
/// log domain relative to the maximum, which is the same as dividing logits
/// by T. Temperatures below kGreedyTemperature give a one-hot vector at the
/// lowest-index argmax. Throws ValidationError for T <= 0.
std::vector<double> apply_temperature(std::span<const double> distribution,
                                      double temperature);

/// Keeps the k most probable entries (lower index wins ties), zeroes the rest
/// and renormalises. An unset k, or k >= size, returns the input unchanged.
std::vector<double> truncate_top_k(std::span<const double> distribution,
                                   std::optional<std::size_t> k);

/// Nucleus truncation: keeps the smallest probability-ordered prefix whose
/// mass reaches p.
std::vector<double> truncate_top_p(std::span<const double> distribution,
                                   double p);

/// Temperature followed by the configured truncation.
std::vector<double> decode_distribution(std::span<const double> distribution,
                                        const SamplerConfig& config);

std::size_t argmax(std::span<const double> values);

}  // namespace clinsynth

#endif  // CLINSYNTH_DECODING_HPP_
