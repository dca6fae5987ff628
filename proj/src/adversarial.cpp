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

#include "clinsynth/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "clinsynth/error.hpp"
#include "clinsynth/ngram.hpp"
#include "clinsynth/rng.hpp"

namespace clinsynth {

CategoricalGenerator::CategoricalGenerator(std::size_t num_symbols, std::size_t order,
                                           std::size_t max_length,
                                           std::optional<Symbol> end_symbol)
    : num_symbols_(num_symbols),
      order_(order),
      max_length_(max_length),
      end_symbol_(end_symbol) {
  if (num_symbols_ < 1) throw ValidationError("generator needs at least one symbol");
  if (order_ < 1) throw ValidationError("generator order must be at least 1");
  if (max_length_ < 1) throw ValidationError("generator max_length must be at least 1");
  if (end_symbol_ && (*end_symbol_ < 0 ||
                      static_cast<std::size_t>(*end_symbol_) >= num_symbols_)) {
    throw ValidationError("end symbol out of range");
  }
}

std::vector<double> CategoricalGenerator::logits(const SymbolContext& context) const {
  auto it = table_.find(context);
  if (it == table_.end()) return std::vector<double>(num_symbols_, 0.0);
  return it->second;
}

std::vector<double>& CategoricalGenerator::mutable_logits(const SymbolContext& context) {
  if (context.size() != order_ - 1) {
    throw ValidationError("generator context length must equal order - 1");
  }
  auto [it, inserted] = table_.try_emplace(context, num_symbols_, 0.0);
  return it->second;
}

std::vector<double> CategoricalGenerator::probabilities(const SymbolContext& context) const {
  auto it = table_.find(context);
  if (it == table_.end()) {
    return std::vector<double>(num_symbols_, 1.0 / static_cast<double>(num_symbols_));
  }
  return softmax(it->second);
}

SymbolContext CategoricalGenerator::initial_context() const {
  return SymbolContext(order_ - 1, kBeginSymbol);
}

SymbolContext CategoricalGenerator::advance(const SymbolContext& context,
                                            Symbol symbol) const {
  if (context.empty()) return context;
  SymbolContext next(context.begin() + 1, context.end());
  next.push_back(symbol);
  return next;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  return out;
}

std::vector<GeneratedSequence> generator_sample(const CategoricalGenerator& g,
                                                std::uint64_t seed, std::size_t n) {
  if (n < 1) throw ValidationError("sample count must be at least 1");
  std::vector<GeneratedSequence> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    GeneratedSequence& seq = out[i];
    SymbolContext ctx = g.initial_context();
    while (seq.symbols.size() < g.max_length()) {
      const auto probs = g.probabilities(ctx);
      const auto a = static_cast<Symbol>(rng.categorical(probs));
      seq.steps.push_back({ctx, a});
      seq.log_prob += std::log(probs[static_cast<std::size_t>(a)]);
      if (g.end_symbol() && a == *g.end_symbol()) break;
      seq.symbols.push_back(a);
      ctx = g.advance(ctx, a);
    }
  }
  return out;
}

Discriminator::Discriminator(std::size_t feature_order) : feature_order_(feature_order) {
  if (feature_order_ < 1) throw ValidationError("feature order must be at least 1");
}

std::map<std::vector<Symbol>, double> Discriminator::features(
    std::span<const Symbol> sequence) const {
  std::map<std::vector<Symbol>, double> out;
  for (std::size_t n = 1; n <= feature_order_; ++n) {
    std::vector<Symbol> framed;
    if (n >= 2) framed.push_back(kBeginSymbol);
    framed.insert(framed.end(), sequence.begin(), sequence.end());
    if (n >= 2) framed.push_back(kFinishSymbol);
    if (framed.size() < n) continue;
    const std::size_t windows = framed.size() - n + 1;
    const double unit = 1.0 / static_cast<double>(windows);
    for (std::size_t i = 0; i < windows; ++i) {
      out[std::vector<Symbol>(framed.begin() + i, framed.begin() + i + n)] += unit;
    }
  }
  return out;
}

double Discriminator::logit(std::span<const Symbol> sequence) const {
  double z = bias_;
  for (const auto& [f, x] : features(sequence)) {
    auto it = weights_.find(f);
    if (it != weights_.end()) z += it->second * x;
  }
  return z;
}

namespace {

constexpr double kScoreFloor = 1e-15;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
double softplus(double z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

}  // namespace

double Discriminator::score(std::span<const Symbol> sequence) const {
  return std::clamp(sigmoid(logit(sequence)), kScoreFloor, 1.0 - kScoreFloor);
}

DiscriminatorUpdate discriminator_step(const Discriminator& d,
                                       const std::vector<std::vector<Symbol>>& real,
                                       const std::vector<std::vector<Symbol>>& fake,
                                       double learning_rate) {
  if (real.empty() || fake.empty()) {
    throw ValidationError("discriminator step needs real and fake examples");
  }
  std::map<std::vector<Symbol>, double> grad;
  double grad_bias = 0.0;
  double loss = 0.0;
  const double n = static_cast<double>(real.size() + fake.size());
  auto visit = [&](const std::vector<Symbol>& seq, double label) {
    const auto feats = d.features(seq);
    double z = d.bias();
    for (const auto& [f, x] : feats) {
      auto it = d.weights().find(f);
      if (it != d.weights().end()) z += it->second * x;
    }
    loss += softplus(z) - label * z;
    const double err = sigmoid(z) - label;
    grad_bias += err;
    for (const auto& [f, x] : feats) grad[f] += err * x;
  };
  for (const auto& s : real) visit(s, 1.0);
  for (const auto& s : fake) visit(s, 0.0);

  DiscriminatorUpdate out{d, loss / n};
  if (learning_rate == 0.0) return out;
  for (const auto& [f, gsum] : grad) {
    auto it = d.weights().find(f);
    const double w = it == d.weights().end() ? 0.0 : it->second;
    out.discriminator.set_weight(f, w - learning_rate * gsum / n);
  }
  out.discriminator.set_bias(d.bias() - learning_rate * grad_bias / n);
  return out;
}

CategoricalGenerator reinforce_step(const CategoricalGenerator& g,
                                    const std::vector<GeneratedSequence>& samples,
                                    std::span<const double> rewards, bool baseline,
                                    double learning_rate) {
  if (rewards.size() != samples.size()) {
    throw ValidationError("need exactly one reward per sampled sequence");
  }
  if (samples.empty()) return g;
  double b = 0.0;
  for (double r : rewards) {
    if (!std::isfinite(r)) throw ValidationError("rewards must be finite");
    b += r;
  }
  b = baseline ? b / static_cast<double>(rewards.size()) : 0.0;

  LogitGradient grad;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double advantage = rewards[i] - b;
    if (advantage == 0.0) continue;
    for (const auto& step : samples[i].steps) {
      const auto probs = g.probabilities(step.context);
      auto [it, inserted] = grad.try_emplace(step.context, g.num_symbols(), 0.0);
      auto& gv = it->second;
      for (std::size_t j = 0; j < probs.size(); ++j) gv[j] -= advantage * probs[j];
      gv[static_cast<std::size_t>(step.action)] += advantage;
    }
  }
  CategoricalGenerator out = g;
  const double scale = learning_rate / static_cast<double>(samples.size());
  for (const auto& [ctx, gv] : grad) {
    auto& logits = out.mutable_logits(ctx);
    for (std::size_t j = 0; j < gv.size(); ++j) logits[j] += scale * gv[j];
  }
  return out;
}

double count_sequences(const CategoricalGenerator& g, std::size_t max_length) {
  const double v = static_cast<double>(g.num_symbols());
  if (!g.end_symbol()) return std::pow(v, static_cast<double>(max_length));
  const double m = v - 1.0;
  double total = 0.0;
  for (std::size_t l = 0; l <= max_length; ++l) total += std::pow(m, static_cast<double>(l));
  return total;
}

namespace {

struct NodeValue {
  double value = 0.0;
  LogitGradient grad;
};

void add_scaled(LogitGradient& into, const LogitGradient& from, double scale) {
  for (const auto& [ctx, gv] : from) {
    auto [it, inserted] = into.try_emplace(ctx, gv.size(), 0.0);
    for (std::size_t j = 0; j < gv.size(); ++j) it->second[j] += scale * gv[j];
  }
}

// V(prefix) = Σ_a π_a V(prefix + a). Differentiating through the softmax
// gives ∂V/∂logit_j = π_j (V_j - V) at this node plus the π-weighted child
// gradients.
NodeValue evaluate(const CategoricalGenerator& g, const RewardFunction& reward,
                   std::size_t max_length, std::vector<Symbol>& prefix,
                   const SymbolContext& ctx) {
  NodeValue node;
  if (prefix.size() == max_length) {
    node.value = reward(prefix);
    return node;
  }
  const auto probs = g.probabilities(ctx);
  std::vector<double> child_values(probs.size());
  for (std::size_t a = 0; a < probs.size(); ++a) {
    const auto sym = static_cast<Symbol>(a);
    if (g.end_symbol() && sym == *g.end_symbol()) {
      child_values[a] = reward(prefix);
      continue;
    }
    prefix.push_back(sym);
    NodeValue child = evaluate(g, reward, max_length, prefix, g.advance(ctx, sym));
    prefix.pop_back();
    child_values[a] = child.value;
    add_scaled(node.grad, child.grad, probs[a]);
  }
  for (std::size_t a = 0; a < probs.size(); ++a) node.value += probs[a] * child_values[a];
  auto [it, inserted] = node.grad.try_emplace(ctx, probs.size(), 0.0);
  for (std::size_t j = 0; j < probs.size(); ++j) {
    it->second[j] += probs[j] * (child_values[j] - node.value);
  }
  return node;
}

}  // namespace

ExactReward exact_expected_reward(const CategoricalGenerator& g,
                                  const RewardFunction& reward,
                                  std::size_t max_length) {
  if (count_sequences(g, max_length) > static_cast<double>(kMaxEnumeratedSequences)) {
    throw ValidationError("sequence space too large to enumerate");
  }
  std::vector<Symbol> prefix;
  NodeValue root = evaluate(g, reward, max_length, prefix, g.initial_context());
  return {root.value, std::move(root.grad)};
}

nlohmann::json adversarial_config_to_json(const AdversarialConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"g_steps", c.g_steps},
          {"d_steps", c.d_steps},
          {"generator_lr", c.generator_lr},
          {"discriminator_lr", c.discriminator_lr},
          {"generator_order", c.generator_order},
          {"discriminator_order", c.discriminator_order},
          {"max_length", c.max_length},
          {"baseline", c.baseline},
          {"lm_order", c.lm_order},
          {"lm_alpha", c.lm_alpha},
          {"seed", c.seed}};
}

namespace {

double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

TokenSequence decode_symbols(const std::vector<std::string>& symbols,
                             const std::vector<Symbol>& seq) {
  TokenSequence out;
  out.reserve(seq.size());
  for (Symbol s : seq) out.push_back(symbols.at(static_cast<std::size_t>(s)));
  return out;
}

}  // namespace

GanTrainState train_adversarial(const std::vector<TokenSequence>& real,
                                const AdversarialConfig& config) {
  if (real.empty()) throw ValidationError("adversarial training needs a real corpus");
  if (config.batch_size < 1) throw ValidationError("batch_size must be at least 1");

  std::set<std::string> distinct;
  for (const auto& seq : real) distinct.insert(seq.begin(), seq.end());
  std::vector<std::string> symbols(distinct.begin(), distinct.end());
  std::map<std::string, Symbol> index;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    index[symbols[i]] = static_cast<Symbol>(i);
  }
  std::vector<std::vector<Symbol>> real_ids;
  for (const auto& seq : real) {
    std::vector<Symbol> ids;
    for (const auto& t : seq) ids.push_back(index.at(t));
    real_ids.push_back(std::move(ids));
  }

  const Vocabulary lm_vocab(symbols);
  const NGramModel real_lm = train_ngram(real, config.lm_order, config.lm_alpha, lm_vocab);

  const auto end = static_cast<Symbol>(symbols.size());
  GanTrainState state{
      symbols,
      CategoricalGenerator(symbols.size() + 1, config.generator_order, config.max_length, end),
      Discriminator(config.discriminator_order),
      {},
      config.seed};

  Rng rng(derive_seed(config.seed, "adversarial/real-batches"));
  std::uint64_t draw_counter = 0;
  auto next_seed = [&] { return derive_seed(config.seed, draw_counter++); };

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<double> d_losses;
    for (std::size_t s = 0; s < config.d_steps; ++s) {
      std::vector<std::vector<Symbol>> real_batch, fake_batch;
      for (std::size_t i = 0; i < config.batch_size; ++i) {
        real_batch.push_back(real_ids[rng.below(real_ids.size())]);
      }
      for (auto& gs : generator_sample(state.generator, next_seed(), config.batch_size)) {
        fake_batch.push_back(std::move(gs.symbols));
      }
      auto update = discriminator_step(state.discriminator, real_batch, fake_batch,
                                       config.discriminator_lr);
      state.discriminator = std::move(update.discriminator);
      d_losses.push_back(update.loss);
    }

    std::vector<double> g_losses, nlls;
    for (std::size_t s = 0; s < config.g_steps; ++s) {
      auto samples = generator_sample(state.generator, next_seed(), config.batch_size);
      std::vector<double> rewards;
      rewards.reserve(samples.size());
      for (const auto& gs : samples) {
        const double d = state.discriminator.score(gs.symbols);
        rewards.push_back(d);
        g_losses.push_back(-std::log(d));
        const auto lp = real_lm.log_probability(
            lm_vocab.encode(decode_symbols(symbols, gs.symbols)));
        nlls.push_back(-lp.log_prob / static_cast<double>(lp.events));
      }
      state.generator = reinforce_step(state.generator, samples, rewards, config.baseline,
                                       config.generator_lr);
    }
    state.curves.discriminator_loss.push_back(mean(d_losses));
    state.curves.generator_loss.push_back(mean(g_losses));
    state.curves.nll.push_back(mean(nlls));
  }
  return state;
}

std::vector<TokenSequence> sample_gan(const GanTrainState& state, std::uint64_t seed,
                                      std::size_t n) {
  std::vector<TokenSequence> out;
  for (const auto& gs : generator_sample(state.generator, seed, n)) {
    out.push_back(decode_symbols(state.symbols, gs.symbols));
  }
  return out;
}

std::string gan_curves_csv(const GanCurves& curves) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,gen_loss,disc_loss,nll_reward\n";
  for (std::size_t e = 0; e < curves.nll.size(); ++e) {
    out << e << ',' << curves.generator_loss[e] << ',' << curves.discriminator_loss[e]
        << ',' << curves.nll[e] << '\n';
  }
  return out.str();
}

namespace {
constexpr const char* kGanFormat = "clinsynth-gan";
constexpr int kGanVersion = 1;
}  // namespace

nlohmann::json gan_state_to_json(const GanTrainState& state) {
  nlohmann::json table = nlohmann::json::array();
  for (const auto& [ctx, logits] : state.generator.table()) {
    table.push_back({{"context", ctx}, {"logits", logits}});
  }
  nlohmann::json weights = nlohmann::json::array();
  for (const auto& [f, w] : state.discriminator.weights()) {
    weights.push_back({{"feature", f}, {"weight", w}});
  }
  return {{"format", kGanFormat},
          {"version", kGanVersion},
          {"seed", state.seed},
          {"symbols", state.symbols},
          {"generator",
           {{"num_symbols", state.generator.num_symbols()},
            {"order", state.generator.order()},
            {"max_length", state.generator.max_length()},
            {"end_symbol", state.generator.end_symbol()
                               ? nlohmann::json(*state.generator.end_symbol())
                               : nlohmann::json()},
            {"logits", table}}},
          {"discriminator",
           {{"feature_order", state.discriminator.feature_order()},
            {"bias", state.discriminator.bias()},
            {"weights", weights}}},
          {"curves",
           {{"generator_loss", state.curves.generator_loss},
            {"discriminator_loss", state.curves.discriminator_loss},
            {"nll", state.curves.nll}}}};
}

GanTrainState gan_state_from_json(const nlohmann::json& obj) {
  if (obj.value("format", "") != kGanFormat || obj.value("version", 0) != kGanVersion) {
    throw ValidationError("not a clinsynth-gan v1 document");
  }
  const auto& gj = obj.at("generator");
  std::optional<Symbol> end;
  if (!gj.at("end_symbol").is_null()) end = gj.at("end_symbol").get<Symbol>();
  CategoricalGenerator g(gj.at("num_symbols").get<std::size_t>(),
                         gj.at("order").get<std::size_t>(),
                         gj.at("max_length").get<std::size_t>(), end);
  for (const auto& row : gj.at("logits")) {
    g.mutable_logits(row.at("context").get<SymbolContext>()) =
        row.at("logits").get<std::vector<double>>();
  }
  const auto& dj = obj.at("discriminator");
  Discriminator d(dj.at("feature_order").get<std::size_t>());
  d.set_bias(dj.at("bias").get<double>());
  for (const auto& row : dj.at("weights")) {
    d.set_weight(row.at("feature").get<std::vector<Symbol>>(),
                 row.at("weight").get<double>());
  }
  GanCurves curves;
  const auto& cj = obj.at("curves");
  curves.generator_loss = cj.at("generator_loss").get<std::vector<double>>();
  curves.discriminator_loss = cj.at("discriminator_loss").get<std::vector<double>>();
  curves.nll = cj.at("nll").get<std::vector<double>>();
  return {obj.at("symbols").get<std::vector<std::string>>(), std::move(g), std::move(d),
          std::move(curves), obj.at("seed").get<std::uint64_t>()};
}

}  // namespace clinsynth
