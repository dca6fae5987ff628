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

#ifndef CLINSYNTH_LATENT_MIXTURE_HPP_
#define CLINSYNTH_LATENT_MIXTURE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "clinsynth/decoding.hpp"
#include "clinsynth/ngram.hpp"
#include "json.hpp"

namespace clinsynth {

struct MixtureCurve {
  /// Evidence lower bound after each iteration's M-step, evaluated with the
  /// responsibilities that produced it, plus the smoothing prior term.
  /// Smoothed counts make the M-step a MAP step, so this penalized bound is
  /// the quantity EM cannot decrease.
  std::vector<double> lower_bound;
  /// Total log-likelihood of the training documents after each iteration.
  std::vector<double> log_likelihood;
  /// alpha * Σ log p(w | ctx) over every component and observed context.
  std::vector<double> log_prior;

  bool operator==(const MixtureCurve&) const = default;
};

// Mixture of K smoothed n-gram models over whole documents. All components
// share one vocabulary.
struct MixtureModel {
  std::vector<double> weights;
  std::vector<NGramModel> components;
  MixtureCurve curve;
  /// Posterior over components per training document under the final model.
  std::vector<std::vector<double>> responsibilities;

  std::size_t K() const { return weights.size(); }
  bool operator==(const MixtureModel&) const = default;
};

struct EmOptions {
  std::size_t components = 2;
  double alpha = 0.1;
  std::size_t iterations = 50;
  std::size_t order = 1;
  std::uint64_t seed = 0;
};

nlohmann::json em_options_to_json(const EmOptions& options);

/// Seeded random responsibilities, one M-step, then `iterations` rounds of
/// E-step and M-step. Throws ValidationError when K exceeds the number of
/// documents.
MixtureModel fit_em(const std::vector<TokenSequence>& documents,
                    const EmOptions& options);

/// log p_k(doc) for every document and component.
std::vector<std::vector<double>> component_log_likelihoods(
    const MixtureModel& model, const std::vector<TokenSequence>& documents);

/// Dirichlet log-prior (up to a constant) implied by additive smoothing,
/// summed over the given contexts of every component.
double smoothing_log_prior(const MixtureModel& model,
                           const std::vector<std::vector<TokenId>>& contexts);

/// Σ_doc log Σ_k w_k p_k(doc), via log-sum-exp.
double mixture_log_likelihood(const MixtureModel& model,
                              const std::vector<TokenSequence>& documents);

/// Draws a component by weight, then samples it with the shared decoder.
TokenSequence sample_mixture(const MixtureModel& model, const SamplerConfig& config);

std::string mixture_curve_csv(const MixtureCurve& curve);
nlohmann::json mixture_to_json(const MixtureModel& model);
MixtureModel mixture_from_json(const nlohmann::json& obj);

}  // namespace clinsynth

#endif  // CLINSYNTH_LATENT_MIXTURE_HPP_
