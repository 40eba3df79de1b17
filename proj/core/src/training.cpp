// Copyright 2026 The kvcompress Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "kvc/training.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <unordered_map>

#include "kvc/data.hpp"
#include "kvc/errors.hpp"
#include "kvc/tokenizer.hpp"

namespace kvc {

namespace {

std::vector<TokenId> with_eos(std::span<const TokenId> tokens, TokenId eos) {
  std::vector<TokenId> out(tokens.begin(), tokens.end());
  out.push_back(eos);
  return out;
}

template <typename T>
BasicTensor<T> loss_over(const BasicTensor<T>& logits, std::span<const TokenId> targets, ops::Reduction reduction) {
  return ops::cross_entropy(logits, targets, reduction);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed ^ (salt + 0x9E3779B97F4A7C15ULL + (seed << 6) + (seed >> 2));
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

void check_finite_grads(std::span<const Tensor> tensors, std::size_t step) {
  for (const auto& t : tensors) {
    if (!t.has_grad()) continue;
    for (const float g : t.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient at step " + std::to_string(step));
    }
  }
}

// Shared loop for adapter training and base-model training.
template <typename Example, typename LossFn>
LossTrace optimize(std::span<const Tensor> tensors, std::span<const Example> train, std::span<const Example> dev,
                   const TrainConfig& config, const ProgressFn& progress, OptimizerState& optimizer,
                   const LossFn& loss_fn) {
  config.validate();
  LossTrace trace;
  if (config.total_steps == 0) return trace;
  if (train.size() < config.batch_size) {
    throw ConfigError("training set has " + std::to_string(train.size()) + " examples, fewer than batch size " +
                      std::to_string(config.batch_size));
  }
  auto record = [&](std::size_t step, const char* split, double loss) {
    trace.push_back({step, split, loss});
    if (progress) progress(trace.back());
  };
  auto dev_loss = [&] {
    NoGradGuard no_grad;
    double total = 0.0;
    for (const auto& ex : dev) total += static_cast<double>(loss_fn(ex).item());
    return total / static_cast<double>(dev.size());
  };

  for (Tensor t : tensors) t.zero_grad();
  const double inv_batch = 1.0 / static_cast<double>(config.batch_size);
  std::size_t step = 0;
  for (std::uint64_t epoch = 0; step < config.total_steps; ++epoch) {
    for (const auto& batch : batch_indices(train.size(), config.batch_size, mix_seed(config.seed, epoch))) {
      if (step >= config.total_steps) break;
      double total = 0.0;
      try {
        for (const auto i : batch) {
          const auto loss = loss_fn(train[i]);
          total += static_cast<double>(loss.item());
          backward(ops::scale(loss, static_cast<float>(inv_batch)));
        }
      } catch (const NumericError& e) {
        throw NumericError("step " + std::to_string(step) + ": " + e.what());
      }
      const double mean = total * inv_batch;
      if (!std::isfinite(mean)) throw NumericError("non-finite training loss at step " + std::to_string(step));
      check_finite_grads(tensors, step);
      // Updates are numbered from 1 so the first one is not spent at a zero rate.
      adamw_step(tensors, optimizer, lr_at_step(step + 1, config), config);
      for (Tensor t : tensors) t.zero_grad();
      ++step;
      record(step, "train", mean);
      if (!dev.empty() && (step % config.eval_every == 0 || step == config.total_steps)) {
        record(step, "dev", dev_loss());
      }
    }
  }
  return trace;
}

}  // namespace

std::string_view phase_name(Phase phase) { return phase == Phase::kPretrain ? "pretrain" : "finetune"; }

Phase parse_phase(std::string_view name) {
  if (name == "pretrain") return Phase::kPretrain;
  if (name == "finetune") return Phase::kFinetune;
  throw ConfigError("unknown phase '" + std::string(name) + "'");
}

TrainConfig TrainConfig::defaults_for(Phase phase, std::size_t k) {
  TrainConfig c;
  c.phase = phase;
  c.k = k;
  c.peak_lr = phase == Phase::kPretrain ? 1e-4 : 5e-5;
  return c;
}

void TrainConfig::validate() const {
  if (warmup_steps > total_steps) throw ConfigError("warmup_steps must not exceed total_steps");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(peak_lr > 0.0) || !std::isfinite(peak_lr)) throw ConfigError("peak_lr must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (k < 1) throw ConfigError("k must be at least 1");
  if (eval_every < 1) throw ConfigError("eval_every must be at least 1");
}

std::string TrainConfig::to_json() const {
  nlohmann::json j{{"phase", phase_name(phase)},   {"total_steps", total_steps}, {"warmup_steps", warmup_steps},
                   {"peak_lr", peak_lr},           {"batch_size", batch_size},   {"weight_decay", weight_decay},
                   {"beta1", beta1},               {"beta2", beta2},             {"epsilon", epsilon},
                   {"seed", seed},                 {"k", k},                     {"variant", variant_name(variant)},
                   {"eval_every", eval_every}};
  return j.dump();
}

TrainConfig TrainConfig::from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    TrainConfig c;
    c.phase = parse_phase(j.at("phase").get<std::string>());
    c.total_steps = j.at("total_steps").get<std::size_t>();
    c.warmup_steps = j.at("warmup_steps").get<std::size_t>();
    c.peak_lr = j.at("peak_lr").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.epsilon = j.at("epsilon").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.k = j.at("k").get<std::size_t>();
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.eval_every = j.at("eval_every").get<std::size_t>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
}

std::vector<TrainingExample> regeneration_examples(std::span<const CorpusRecord> corpus, Split split) {
  std::vector<TrainingExample> out;
  for (const auto& r : corpus) {
    if (r.split == split) out.push_back({tokenize(r.text), {}, {}});
  }
  return out;
}

std::vector<TrainingExample> qa_examples(std::span<const CorpusRecord> corpus, std::span<const QARecord> qa,
                                         Split split) {
  std::unordered_map<std::string, const CorpusRecord*> by_id;
  for (const auto& r : corpus) by_id[r.id] = &r;
  std::vector<TrainingExample> out;
  for (const auto& q : qa) {
    auto it = by_id.find(q.context_id);
    if (it == by_id.end()) throw DataError("question " + std::to_string(q.id) + " refers to unknown context " + q.context_id);
    if (it->second->split != split) continue;
    out.push_back({tokenize(it->second->text), qa_prompt(q.question), tokenize(q.answer)});
  }
  return out;
}

template <typename T>
BasicTensor<T> pretrain_loss(const ModelParams<T>& params, const AdapterParams<T>& adapters,
                             std::span<const TokenId> text, std::size_t k, PrefixVariant variant,
                             ops::Reduction reduction) {
  const ModelConfig& config = params.config;
  const auto ctx = compress(params, adapters, text, k, variant);
  const auto targets = with_eos(text, config.eos_id);
  if (variant == PrefixVariant::kEmbed && ctx.trigger.defined()) {
    // [embed; trigger; T]: the trigger row predicts the first text token.
    const auto rows = ops::concat_rows(ops::concat_rows(ctx.embed, ctx.trigger), ops::embedding(params.tok_embedding, text));
    ForwardOptions options;
    options.logits_from = k;
    const auto out = forward_embeddings(params, static_cast<const AdapterParams<T>*>(nullptr), rows, static_cast<const KVCache<T>*>(nullptr), 0, options);
    return loss_over(out.logits, targets, reduction);
  }
  std::vector<TokenId> input{config.bos_id};
  input.insert(input.end(), text.begin(), text.end());
  const auto out = forward_with_prefix(params, static_cast<const AdapterParams<T>*>(nullptr), input,
                                       ctx.decoder_prefix());
  return loss_over(out.logits, targets, reduction);
}

template <typename T>
BasicTensor<T> finetune_loss(const ModelParams<T>& params, const AdapterParams<T>& adapters,
                             std::span<const TokenId> text, std::span<const TokenId> question,
                             std::span<const TokenId> answer, std::size_t k, PrefixVariant variant,
                             ops::Reduction reduction) {
  if (question.empty()) throw DataError("fine-tuning example has an empty question");
  if (answer.empty()) throw DataError("fine-tuning example has an empty answer");
  if (!is_contiguous_span(answer, text)) throw DataError("answer is not a contiguous span of its context");
  const auto ctx = compress(params, adapters, text, k, variant);
  std::vector<TokenId> input(question.begin(), question.end());
  input.insert(input.end(), answer.begin(), answer.end());
  ForwardOptions options;
  options.logits_from = question.size() - 1;
  const auto out =
      forward_with_prefix(params, static_cast<const AdapterParams<T>*>(nullptr), input, ctx.decoder_prefix(), options);
  return loss_over(out.logits, with_eos(answer, params.config.eos_id), reduction);
}

template <typename T>
BasicTensor<T> example_loss(const ModelParams<T>& params, const AdapterParams<T>& adapters,
                            const TrainingExample& example, const TrainConfig& config) {
  if (config.phase == Phase::kPretrain) return pretrain_loss(params, adapters, example.text, config.k, config.variant);
  return finetune_loss(params, adapters, example.text, example.question, example.answer, config.k, config.variant);
}

double batch_loss(const ModelParams<float>& params, const AdapterParams<float>& adapters,
                  std::span<const TrainingExample> examples, const TrainConfig& config) {
  if (examples.empty()) throw ContractError("batch_loss: no examples");
  NoGradGuard no_grad;
  double total = 0.0;
  for (const auto& ex : examples) total += static_cast<double>(example_loss(params, adapters, ex, config).item());
  return total / static_cast<double>(examples.size());
}

void adamw_step(std::span<const Tensor> tensors, OptimizerState& state, double lr, const TrainConfig& config) {
  if (state.first_moment.empty() && state.second_moment.empty()) {
    for (const auto& t : tensors) {
      state.first_moment.emplace_back(t.numel(), 0.0f);
      state.second_moment.emplace_back(t.numel(), 0.0f);
    }
  }
  if (state.first_moment.size() != tensors.size() || state.second_moment.size() != tensors.size()) {
    throw StateError("optimizer state does not match the parameter list");
  }
  if (std::none_of(tensors.begin(), tensors.end(), [](const Tensor& t) { return t.has_grad(); })) {
    throw StateError("adamw_step: no gradients are populated");
  }
  ++state.step;
  const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    Tensor t = tensors[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (m.size() != t.numel() || v.size() != t.numel()) throw StateError("optimizer moment size mismatch");
    // Parameters that took no part in the loss are left untouched.
    if (!t.has_grad()) continue;
    const auto g = t.grad();
    auto p = t.mutable_data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j];
      m[j] = static_cast<float>(config.beta1 * m[j] + (1.0 - config.beta1) * gj);
      v[j] = static_cast<float>(config.beta2 * v[j] + (1.0 - config.beta2) * gj * gj);
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      double value = p[j];
      value -= lr * config.weight_decay * value;
      value -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
      p[j] = static_cast<float>(value);
    }
  }
}

void adamw_step(const AdapterParams<float>& adapters, OptimizerState& state, double lr, const TrainConfig& config) {
  const auto tensors = adapters.trainables();
  adamw_step(std::span<const Tensor>(tensors), state, lr, config);
}

double lr_at_step(std::size_t step, const TrainConfig& config) {
  if (config.warmup_steps == 0 || step >= config.warmup_steps) return config.peak_lr;
  return config.peak_lr * static_cast<double>(step) / static_cast<double>(config.warmup_steps);
}

void write_loss_csv(const LossTrace& trace, std::ostream& out) {
  out << "step,split,loss\n";
  for (const auto& p : trace) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", p.loss);
    out << p.step << ',' << p.split << ',' << buf << '\n';
  }
}

TrainResult run_training(const ModelParams<float>& params, AdapterParams<float> adapters,
                         std::span<const TrainingExample> train, std::span<const TrainingExample> dev,
                         const TrainConfig& config, const ProgressFn& progress, OptimizerState optimizer) {
  if (config.k > params.config.k_max) throw ConfigError("k exceeds the model's k_max");
  // The caller's tensors share storage with the argument, so train a private copy.
  adapters = adapters.clone();
  const auto tensors = adapters.trainables();
  for (auto t : tensors) t.set_requires_grad(true);
  auto loss_fn = [&](const TrainingExample& ex) { return example_loss(params, adapters, ex, config); };
  auto trace = optimize<TrainingExample>(tensors, train, dev, config, progress, optimizer, loss_fn);
  return {std::move(adapters), std::move(trace), std::move(optimizer)};
}

LmExample lm_example_from_text(const ModelConfig& config, std::span<const TokenId> text) {
  LmExample ex;
  ex.tokens.push_back(config.bos_id);
  ex.tokens.insert(ex.tokens.end(), text.begin(), text.end());
  ex.tokens.push_back(config.eos_id);
  ex.first_target = 1;
  return ex;
}

LmExample lm_example_from_qa(const ModelConfig& config, std::string_view context, std::string_view question,
                             std::string_view answer, bool instruct) {
  LmExample ex;
  ex.tokens.push_back(config.bos_id);
  const auto prompt = full_context_prompt(context, question, instruct);
  ex.tokens.insert(ex.tokens.end(), prompt.begin(), prompt.end());
  ex.first_target = ex.tokens.size();
  const auto a = tokenize(answer);
  ex.tokens.insert(ex.tokens.end(), a.begin(), a.end());
  ex.tokens.push_back(config.eos_id);
  return ex;
}

LmExample lm_example_repeat(const ModelConfig& config, std::span<const TokenId> text) {
  if (text.empty()) throw DataError("cannot build a repeat example from empty text");
  LmExample ex;
  ex.tokens.assign(text.begin(), text.end());
  ex.tokens.push_back(config.bos_id);
  ex.tokens.insert(ex.tokens.end(), text.begin(), text.end());
  ex.tokens.push_back(config.eos_id);
  ex.first_target = 1;
  return ex;
}

std::vector<LmExample> base_lm_examples(const ModelConfig& config, std::span<const CorpusRecord> corpus,
                                        std::span<const QARecord> qa, Split split, const BaseLmMix& mix) {
  std::vector<LmExample> out;
  std::unordered_map<std::string, const CorpusRecord*> by_id;
  for (const auto& r : corpus) {
    by_id[r.id] = &r;
    if (r.split != split) continue;
    const auto tokens = tokenize(r.text);
    out.push_back(lm_example_from_text(config, tokens));
    if (mix.repeats) out.push_back(lm_example_repeat(config, tokens));
  }
  for (const auto& q : qa) {
    auto it = by_id.find(q.context_id);
    if (it == by_id.end() || it->second->split != split) continue;
    if (mix.instruct_qa) out.push_back(lm_example_from_qa(config, it->second->text, q.question, q.answer, true));
    if (mix.zero_shot_qa) out.push_back(lm_example_from_qa(config, it->second->text, q.question, q.answer, false));
  }
  return out;
}

template <typename T>
BasicTensor<T> lm_loss(const ModelParams<T>& params, const LmExample& example) {
  if (example.first_target < 1 || example.first_target >= example.tokens.size()) {
    throw DataError("language-model example has no targets");
  }
  const std::span<const TokenId> all(example.tokens);
  ForwardOptions options;
  options.logits_from = example.first_target - 1;
  const auto out = forward_with_prefix(params, static_cast<const AdapterParams<T>*>(nullptr),
                                       all.first(all.size() - 1), Prefix<T>{}, options);
  return ops::cross_entropy(out.logits, all.subspan(example.first_target), ops::Reduction::kMean);
}

LossTrace train_base_model(ModelParams<float>& params, std::span<const LmExample> train,
                           std::span<const LmExample> dev, const TrainConfig& config, const ProgressFn& progress) {
  params.set_trainable(true);
  std::vector<Tensor> tensors;
  for (const auto& nt : params.named_tensors()) tensors.push_back(nt.tensor);
  OptimizerState optimizer;
  LossTrace trace;
  try {
    auto loss_fn = [&](const LmExample& ex) { return lm_loss(params, ex); };
    trace = optimize<LmExample>(tensors, train, dev, config, progress, optimizer, loss_fn);
  } catch (...) {
    params.set_trainable(false);
    throw;
  }
  params.set_trainable(false);
  return trace;
}

#define KVC_INSTANTIATE_TRAINING(T)                                                                               \
  template BasicTensor<T> pretrain_loss(const ModelParams<T>&, const AdapterParams<T>&, std::span<const TokenId>, \
                                        std::size_t, PrefixVariant, ops::Reduction);                              \
  template BasicTensor<T> finetune_loss(const ModelParams<T>&, const AdapterParams<T>&, std::span<const TokenId>, \
                                        std::span<const TokenId>, std::span<const TokenId>, std::size_t,          \
                                        PrefixVariant, ops::Reduction);                                           \
  template BasicTensor<T> example_loss(const ModelParams<T>&, const AdapterParams<T>&, const TrainingExample&,    \
                                       const TrainConfig&);                                                       \
  template BasicTensor<T> lm_loss(const ModelParams<T>&, const LmExample&);

KVC_INSTANTIATE_TRAINING(float)
KVC_INSTANTIATE_TRAINING(double)

#undef KVC_INSTANTIATE_TRAINING

}  // namespace kvc
