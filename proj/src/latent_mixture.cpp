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

#include "clinsynth/latent_mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include "clinsynth/error.hpp"
#include "clinsynth/rng.hpp"

namespace clinsynth {

namespace {

double log_sum_exp(const std::vector<double>& xs) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : xs) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

// Fills out[d][k] = log p_k(doc d). Documents are split across workers; each
// cell is written by exactly one worker so the result does not depend on
// scheduling.
void score_documents(const std::vector<NGramModel>& components,
                     const std::vector<std::vector<TokenId>>& docs,
                     std::vector<std::vector<double>>& out) {
  out.assign(docs.size(), std::vector<double>(components.size()));
  const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers = std::min<std::size_t>(hw, std::max<std::size_t>(1, docs.size() / 64));
  auto work = [&](std::size_t w) {
    for (std::size_t d = w; d < docs.size(); d += workers) {
      for (std::size_t k = 0; k < components.size(); ++k) {
        out[d][k] = components[k].log_probability(docs[d]).log_prob;
      }
    }
  };
  if (workers <= 1) {
    work(0);
    return;
  }
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
}

struct EStep {
  std::vector<std::vector<double>> resp;
  double log_likelihood = 0.0;
};

EStep e_step(const std::vector<double>& weights,
             const std::vector<std::vector<double>>& logp) {
  EStep out;
  out.resp.resize(logp.size());
  std::vector<double> joint(weights.size());
  for (std::size_t d = 0; d < logp.size(); ++d) {
    for (std::size_t k = 0; k < weights.size(); ++k) {
      joint[k] = weights[k] > 0 ? std::log(weights[k]) + logp[d][k]
                                : -std::numeric_limits<double>::infinity();
    }
    const double z = log_sum_exp(joint);
    out.log_likelihood += z;
    auto& r = out.resp[d];
    r.resize(weights.size());
    for (std::size_t k = 0; k < weights.size(); ++k) r[k] = std::exp(joint[k] - z);
  }
  return out;
}

// Expected complete-data log-likelihood plus responsibility entropy.
double evidence_lower_bound(const std::vector<double>& weights,
                            const std::vector<std::vector<double>>& logp,
                            const std::vector<std::vector<double>>& resp) {
  double elbo = 0.0;
  for (std::size_t d = 0; d < resp.size(); ++d) {
    for (std::size_t k = 0; k < weights.size(); ++k) {
      const double r = resp[d][k];
      if (r <= 0.0) continue;
      elbo += r * (std::log(weights[k]) + logp[d][k] - std::log(r));
    }
  }
  return elbo;
}

void m_step(const std::vector<std::vector<TokenId>>& docs,
            const std::vector<std::vector<double>>& resp, const EmOptions& options,
            const Vocabulary& vocab, MixtureModel& model) {
  const std::size_t K = options.components;
  model.weights.assign(K, 0.0);
  model.components.clear();
  for (std::size_t k = 0; k < K; ++k) {
    model.components.emplace_back(options.order, options.alpha, vocab);
  }
  for (std::size_t d = 0; d < docs.size(); ++d) {
    for (std::size_t k = 0; k < K; ++k) {
      const double r = resp[d][k];
      model.weights[k] += r;
      if (r > 0.0) model.components[k].accumulate(docs[d], r);
    }
  }
  for (auto& w : model.weights) w /= static_cast<double>(docs.size());
}

}  // namespace

double smoothing_log_prior(const MixtureModel& model,
                           const std::vector<std::vector<TokenId>>& contexts) {
  double total = 0.0;
  for (const auto& lm : model.components) {
    for (const auto& ctx : contexts) {
      const auto dist = lm.distribution(ctx);
      for (std::size_t w = 0; w < dist.size(); ++w) {
        if (static_cast<TokenId>(w) == Vocabulary::kStart) continue;
        total += lm.alpha() * std::log(dist[w]);
      }
    }
  }
  return total;
}

nlohmann::json em_options_to_json(const EmOptions& o) {
  return {{"components", o.components},
          {"alpha", o.alpha},
          {"iterations", o.iterations},
          {"order", o.order},
          {"seed", o.seed}};
}

MixtureModel fit_em(const std::vector<TokenSequence>& documents,
                    const EmOptions& options) {
  if (documents.empty()) throw ValidationError("EM needs at least one document");
  if (options.components < 1) throw ValidationError("K must be at least 1");
  if (options.components > documents.size()) {
    throw ValidationError("K (" + std::to_string(options.components) +
                          ") exceeds the document count (" +
                          std::to_string(documents.size()) + ")");
  }
  if (!(options.alpha > 0.0)) throw ValidationError("EM needs alpha > 0");

  std::set<std::string> types;
  for (const auto& doc : documents) types.insert(doc.begin(), doc.end());
  const Vocabulary vocab(std::vector<std::string>(types.begin(), types.end()));
  std::vector<std::vector<TokenId>> docs;
  docs.reserve(documents.size());
  for (const auto& doc : documents) docs.push_back(vocab.encode(doc));

  const std::size_t K = options.components;
  // Dirichlet(1) draws per document.
  Rng rng(derive_seed(options.seed, "mixture/init"));
  std::vector<std::vector<double>> resp(docs.size(), std::vector<double>(K));
  for (auto& r : resp) {
    double total = 0.0;
    for (auto& x : r) {
      x = -std::log(1.0 - rng.uniform());
      total += x;
    }
    for (auto& x : r) x /= total;
  }

  MixtureModel model;
  m_step(docs, resp, options, vocab, model);

  std::set<std::vector<TokenId>> context_set;
  for (const auto& doc : docs) {
    for (auto& ev : model.components.front().events(doc)) context_set.insert(ev.context);
  }
  const std::vector<std::vector<TokenId>> contexts(context_set.begin(), context_set.end());

  std::vector<std::vector<double>> logp;
  for (std::size_t it = 0; it < options.iterations; ++it) {
    score_documents(model.components, docs, logp);
    resp = e_step(model.weights, logp).resp;
    m_step(docs, resp, options, vocab, model);
    score_documents(model.components, docs, logp);
    const double prior = smoothing_log_prior(model, contexts);
    model.curve.lower_bound.push_back(evidence_lower_bound(model.weights, logp, resp) +
                                      prior);
    model.curve.log_prior.push_back(prior);
    model.curve.log_likelihood.push_back(e_step(model.weights, logp).log_likelihood);
  }
  score_documents(model.components, docs, logp);
  model.responsibilities = e_step(model.weights, logp).resp;
  return model;
}

std::vector<std::vector<double>> component_log_likelihoods(
    const MixtureModel& model, const std::vector<TokenSequence>& documents) {
  if (model.components.empty()) throw ValidationError("mixture has no components");
  const Vocabulary& vocab = model.components.front().vocabulary();
  std::vector<std::vector<TokenId>> docs;
  docs.reserve(documents.size());
  for (const auto& doc : documents) docs.push_back(vocab.encode(doc));
  std::vector<std::vector<double>> logp;
  score_documents(model.components, docs, logp);
  return logp;
}

double mixture_log_likelihood(const MixtureModel& model,
                              const std::vector<TokenSequence>& documents) {
  return e_step(model.weights, component_log_likelihoods(model, documents)).log_likelihood;
}

TokenSequence sample_mixture(const MixtureModel& model, const SamplerConfig& config) {
  config.validate();
  if (model.components.empty()) throw ValidationError("mixture has no components");
  Rng rng(config.seed);
  const std::size_t k = rng.categorical(model.weights);
  const auto& lm = model.components[k];
  return lm.vocabulary().decode(sample_ids(lm, config, rng));
}

std::string mixture_curve_csv(const MixtureCurve& curve) {
  std::ostringstream out;
  out.precision(17);
  out << "iteration,lower_bound,log_likelihood,log_prior\n";
  for (std::size_t i = 0; i < curve.lower_bound.size(); ++i) {
    out << i + 1 << ',' << curve.lower_bound[i] << ',' << curve.log_likelihood[i] << ','
        << curve.log_prior[i] << '\n';
  }
  return out.str();
}

namespace {
constexpr const char* kMixtureFormat = "clinsynth-mixture";
constexpr int kMixtureVersion = 1;
}  // namespace

nlohmann::json mixture_to_json(const MixtureModel& model) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : model.components) comps.push_back(ngram_to_json(c));
  return {{"format", kMixtureFormat},
          {"version", kMixtureVersion},
          {"weights", model.weights},
          {"components", comps},
          {"curve",
           {{"lower_bound", model.curve.lower_bound},
            {"log_likelihood", model.curve.log_likelihood},
            {"log_prior", model.curve.log_prior}}},
          {"responsibilities", model.responsibilities}};
}

MixtureModel mixture_from_json(const nlohmann::json& obj) {
  if (obj.value("format", "") != kMixtureFormat ||
      obj.value("version", 0) != kMixtureVersion) {
    throw ValidationError("not a clinsynth-mixture v1 document");
  }
  MixtureModel model;
  model.weights = obj.at("weights").get<std::vector<double>>();
  for (const auto& c : obj.at("components")) model.components.push_back(ngram_from_json(c));
  if (model.components.size() != model.weights.size()) {
    throw ValidationError("mixture weights and components differ in length");
  }
  model.curve.lower_bound = obj.at("curve").at("lower_bound").get<std::vector<double>>();
  model.curve.log_likelihood =
      obj.at("curve").at("log_likelihood").get<std::vector<double>>();
  model.curve.log_prior = obj.at("curve").at("log_prior").get<std::vector<double>>();
  model.responsibilities =
      obj.at("responsibilities").get<std::vector<std::vector<double>>>();
  return model;
}

}  // namespace clinsynth
