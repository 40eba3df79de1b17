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

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "kvc/adapters.hpp"
#include "kvc/compressor.hpp"
#include "kvc/data.hpp"
#include "kvc/ops.hpp"
#include "kvc/params.hpp"

namespace kvc {

enum class Phase { kPretrain, kFinetune };

std::string_view phase_name(Phase phase);
Phase parse_phase(std::string_view name);

struct TrainConfig {
  Phase phase = Phase::kPretrain;
  std::size_t total_steps = 2000;
  std::size_t warmup_steps = 300;
  double peak_lr = 1e-4;
  std::size_t batch_size = 4;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 1;
  std::size_t k = 16;
  PrefixVariant variant = PrefixVariant::kKv;
  std::size_t eval_every = 100;

  // Warm-up 300, batch 4, AdamW; 1e-4 for pretraining and 5e-5 for
  // fine-tuning. Step counts are left to the caller.
  static TrainConfig defaults_for(Phase phase, std::size_t k);

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(std::string_view text);
};

// A regeneration example carries only `text`; a QA example also carries a
// question and an answer that is a contiguous span of `text`.
struct TrainingExample {
  std::vector<TokenId> text;
  std::vector<TokenId> question;
  std::vector<TokenId> answer;
};

// Regeneration objective: decoder sees (prefix, [BOS], t_1..t_l) and is
// scored on t_1..t_l, [EOS]. With a trained trigger the [BOS] slot is the
// trigger embedding instead.
// Regeneration examples from every record of `split`.
std::vector<TrainingExample> regeneration_examples(std::span<const CorpusRecord> corpus, Split split);
// Question/answer examples whose contexts belong to `split`; questions carry the qa_prompt form.
std::vector<TrainingExample> qa_examples(std::span<const CorpusRecord> corpus, std::span<const QARecord> qa,
                                         Split split);

template <typename T>
BasicTensor<T> pretrain_loss(const ModelParams<T>& params, const AdapterParams<T>& adapters,
                             std::span<const TokenId> text, std::size_t k, PrefixVariant variant,
                             ops::Reduction reduction = ops::Reduction::kMean);

// QA objective: decoder sees (prefix, q_1..q_m, a_1..a_n) and is scored on
// a_1..a_n, [EOS] only. Throws DataError unless the answer is a span of text.
template <typename T>
BasicTensor<T> finetune_loss(const ModelParams<T>& params, const AdapterParams<T>& adapters,
                             std::span<const TokenId> text, std::span<const TokenId> question,
                             std::span<const TokenId> answer, std::size_t k, PrefixVariant variant,
                             ops::Reduction reduction = ops::Reduction::kMean);

template <typename T>
BasicTensor<T> example_loss(const ModelParams<T>& params, const AdapterParams<T>& adapters,
                            const TrainingExample& example, const TrainConfig& config);

// Mean of per-example (token-mean) losses, no gradient.
double batch_loss(const ModelParams<float>& params, const AdapterParams<float>& adapters,
                  std::span<const TrainingExample> examples, const TrainConfig& config);

struct OptimizerState {
  std::vector<std::vector<float>> first_moment;
  std::vector<std::vector<float>> second_moment;
  std::size_t step = 0;
};

// Decoupled-weight-decay Adam on the given tensors. Every tensor must hold
// a gradient (StateError otherwise).
void adamw_step(std::span<const Tensor> tensors, OptimizerState& state, double lr, const TrainConfig& config);
void adamw_step(const AdapterParams<float>& adapters, OptimizerState& state, double lr, const TrainConfig& config);

// Linear ramp 0 -> peak over warmup_steps, constant afterwards.
double lr_at_step(std::size_t step, const TrainConfig& config);

struct LossPoint {
  std::size_t step = 0;
  std::string split;
  double loss = 0.0;
};
using LossTrace = std::vector<LossPoint>;

// CSV with header "step,split,loss".
void write_loss_csv(const LossTrace& trace, std::ostream& out);

struct TrainResult {
  AdapterParams<float> adapters;
  LossTrace trace;
  OptimizerState optimizer;
};

using ProgressFn = std::function<void(const LossPoint&)>;

// Trains the adapters in place (the returned handle aliases `adapters`).
// Base weights are never touched. Throws NumericError on a non-finite loss.
TrainResult run_training(const ModelParams<float>& params, AdapterParams<float> adapters,
                         std::span<const TrainingExample> train, std::span<const TrainingExample> dev,
                         const TrainConfig& config, const ProgressFn& progress = {},
                         OptimizerState optimizer = {});

// ---------------------------------------------------------------------------
// Base language model. The compressor assumes a frozen model that already
// models the corpus; this trains one from scratch.

// Causal LM sequence scored on tokens[first_target..].
struct LmExample {
  std::vector<TokenId> tokens;
  std::size_t first_target = 1;
};

LmExample lm_example_from_text(const ModelConfig& config, std::span<const TokenId> text);
// [BOS] prompt answer [EOS], scored on the answer and [EOS].
LmExample lm_example_from_qa(const ModelConfig& config, std::string_view context, std::string_view question,
                             std::string_view answer, bool instruct);

// `text [BOS] text [EOS]`, scored from the second token on. Teaches the decoder to copy from earlier context.
LmExample lm_example_repeat(const ModelConfig& config, std::span<const TokenId> text);

struct BaseLmMix {
  bool instruct_qa = true;
  bool zero_shot_qa = true;
  bool repeats = true;
};

// Plain-text examples for `split`, plus whatever the mix enables.
std::vector<LmExample> base_lm_examples(const ModelConfig& config, std::span<const CorpusRecord> corpus,
                                        std::span<const QARecord> qa, Split split, const BaseLmMix& mix = {});

template <typename T>
BasicTensor<T> lm_loss(const ModelParams<T>& params, const LmExample& example);

LossTrace train_base_model(ModelParams<float>& params, std::span<const LmExample> train,
                           std::span<const LmExample> dev, const TrainConfig& config,
                           const ProgressFn& progress = {});

}  // namespace kvc
