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


#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "kvc/checkpoint.hpp"
#include "kvc/data.hpp"
#include "kvc/errors.hpp"
#include "kvc/grad_check.hpp"
#include "kvc/tokenizer.hpp"
#include "kvc/training.hpp"
#include "test_support.hpp"

namespace kvc {
namespace {

using testing::random_tensor;
using testing::random_tokens;
using testing::tiny_config;
using testing::TinySetup;
using testing::worst_adapter_grad_error;

const std::vector<TokenId> kTinyText{1, 2, 3, 4};

TEST(PretrainLoss, GradCheckOnTinyConfig) {
  for (const auto variant : {PrefixVariant::kKv, PrefixVariant::kEmbed}) {
    for (const bool trigger : {false, true}) {
      TinySetup setup(trigger);
      const double err = worst_adapter_grad_error(setup, [&](const AdapterParams<double>& a) {
        return pretrain_loss(setup.params, a, kTinyText, 1, variant);
      });
      EXPECT_LE(err, 1e-3) << variant_name(variant) << " trigger=" << trigger;
    }
  }
}

TEST(FinetuneLoss, GradCheckOnTinyConfig) {
  const std::vector<TokenId> text{1, 2, 3, 4, 5};
  const std::vector<TokenId> question{6, 7};
  const std::vector<TokenId> answer{3, 4};
  for (const auto variant : {PrefixVariant::kKv, PrefixVariant::kEmbed}) {
    TinySetup setup(false, 2);
    const double err = worst_adapter_grad_error(setup, [&](const AdapterParams<double>& a) {
      return finetune_loss(setup.params, a, text, question, answer, 1, variant);
    });
    EXPECT_LE(err, 1e-3) << variant_name(variant);
  }
}

TEST(PretrainLoss, TwoLayerGradCheckOnEightTokens) {
  TinySetup setup(false, 3, 2);
  const std::vector<TokenId> text{0, 5, 2, 9, 1, 1, 7, 3};
  const double err = worst_adapter_grad_error(setup, [&](const AdapterParams<double>& a) {
    return pretrain_loss(setup.params, a, text, 2, PrefixVariant::kKv);
  });
  EXPECT_LE(err, 1e-3);
}

TEST(LmLoss, GradCheckOnBaseWeights) {
  TinySetup setup(false, 4);
  const LmExample ex{{11, 1, 2, 3, 4, 12}, 1};
  for (const auto& nt : setup.params.named_tensors()) {
    const double err = grad_check(
        [&](const Tensor64& v) {
          auto named = setup.params.named_tensors();
          for (auto& other : named) {
            if (other.name == nt.name) other.tensor = v;
          }
          return lm_loss(ModelParams<double>::from_named(setup.config, named), ex);
        },
        nt.tensor, 1e-5);
    EXPECT_LE(err, 1e-3) << nt.name;
  }
}

TEST(PretrainLoss, NonNegativeOnRandomModels) {
  const auto config = ModelConfig::byte_level(32, 1, 4, 64, 4, 256);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto params = ModelParams<float>::init(config, seed);
    const auto adapters = init_adapters<float>(config, AdapterConfig{}, seed);
    const auto text = random_tokens(30, seed);
    EXPECT_GE(pretrain_loss(params, adapters, text, 2, PrefixVariant::kKv).item(), 0.0f);
    EXPECT_GE(pretrain_loss(params, adapters, text, 2, PrefixVariant::kEmbed).item(), 0.0f);
  }
}

TEST(PretrainLoss, RiggedDecoderGivesNearZeroLoss) {
  const auto config = ModelConfig::byte_level(32, 1, 4, 64, 4, 256);
  // BOS has slot 0; 'A'..'D' occupy slots 1..4.
  std::vector<TokenId> successor(32, 0);
  successor[0] = 'A';
  successor[1] = 'B';
  successor[2] = 'C';
  successor[3] = 'D';
  successor[4] = config.eos_id;
  const auto params = testing::rigged_successor_model(config, successor);
  const auto adapters = init_adapters<float>(config, AdapterConfig{}, 1);
  const auto text = tokenize("ABCD");
  EXPECT_LT(pretrain_loss(params, adapters, text, 1, PrefixVariant::kKv).item(), 1e-6);
  EXPECT_LT(pretrain_loss(params, adapters, text, 1, PrefixVariant::kKv, ops::Reduction::kSum).item(), 1e-6);
}

TEST(FinetuneLoss, RiggedDecoderIgnoresQuestionPredictions) {
  const auto config = ModelConfig::byte_level(32, 1, 4, 64, 4, 256);
  const auto text = tokenize("ABCDE");
  const auto question = tokenize("PQ");  // slots 16, 17
  const auto answer = tokenize("BC");    // slots 2, 3
  std::vector<TokenId> successor(32, 'z');
  successor['Q' % 32] = 'B';
  successor['B' % 32] = 'C';
  successor['C' % 32] = config.eos_id;
  // The prediction after 'P' is wrong on purpose: question targets carry no loss.
  successor['P' % 32] = 'z';
  const auto params = testing::rigged_successor_model(config, successor);
  const auto adapters = init_adapters<float>(config, AdapterConfig{}, 1);
  EXPECT_LT(finetune_loss(params, adapters, text, question, answer, 2, PrefixVariant::kKv).item(), 1e-6);
  EXPECT_LT(finetune_loss(params, adapters, text, question, answer, 2, PrefixVariant::kEmbed).item(), 1e-6);
}

TEST(FinetuneLoss, MatchesCrossEntropyOverAnswerRowsOnly) {
  const auto config = ModelConfig::byte_level(32, 2, 4, 64, 4, 256);
  const auto params = ModelParams<float>::init(config, 5);
  auto adapters = init_adapters<float>(config, AdapterConfig{}, 6);
  const auto text = tokenize("the code is QX-17 and the year is 1843");
  const auto question = qa_prompt("code?");
  const auto answer = tokenize("QX-17");
  const float loss = finetune_loss(params, adapters, text, question, answer, 2, PrefixVariant::kKv,
                                   ops::Reduction::kSum).item();

  const auto ctx = compress_kv(params, adapters, text, 2);
  std::vector<TokenId> input = question;
  input.insert(input.end(), answer.begin(), answer.end());
  const auto out = forward_with_prefix(params, static_cast<const AdapterParams<float>*>(nullptr), input,
                                       ctx.decoder_prefix());
  std::vector<TokenId> targets = answer;
  targets.push_back(config.eos_id);
  const auto rows = ops::slice_rows(out.logits, question.size() - 1, input.size());
  EXPECT_NEAR(loss, ops::cross_entropy(rows, targets, ops::Reduction::kSum).item(), 1e-4);
}

TEST(FinetuneLoss, RejectsInvalidExamples) {
  const auto config = ModelConfig::byte_level(32, 1, 4, 64, 4, 256);
  const auto params = ModelParams<float>::init(config, 5);
  const auto adapters = init_adapters<float>(config, AdapterConfig{}, 6);
  const auto text = tokenize("alpha beta gamma");
  EXPECT_THROW(finetune_loss(params, adapters, text, {}, tokenize("beta"), 1, PrefixVariant::kKv), DataError);
  EXPECT_THROW(finetune_loss(params, adapters, text, tokenize("q "), {}, 1, PrefixVariant::kKv), DataError);
  EXPECT_THROW(finetune_loss(params, adapters, text, tokenize("q "), tokenize("delta"), 1, PrefixVariant::kKv),
               DataError);
}

TEST(AdamW, ZeroGradientZeroDecayLeavesParameter) {
  Tensor x({3}, {0.5f, -1.0f, 2.0f}, true);
  backward(ops::scale(ops::sum(x), 0.0f));
  OptimizerState state;
  TrainConfig config;
  config.weight_decay = 0.0;
  adamw_step(std::vector<Tensor>{x}, state, 1e-3, config);
  EXPECT_EQ(std::vector<float>(x.data().begin(), x.data().end()), (std::vector<float>{0.5f, -1.0f, 2.0f}));
}

TEST(AdamW, FirstStepOnUnitGradientMovesByLearningRate) {
  Tensor x({1}, {0.25f}, true);
  backward(ops::sum(x));
  OptimizerState state;
  TrainConfig config;
  const double lr = 1e-2;
  adamw_step(std::vector<Tensor>{x}, state, lr, config);
  EXPECT_NEAR(x.data()[0], 0.25 - lr / (1.0 + config.epsilon), 1e-7);
  EXPECT_EQ(state.step, 1u);
}

TEST(AdamW, MissingGradientsAreStateError) {
  Tensor x({2}, {1, 2}, true);
  OptimizerState state;
  EXPECT_THROW(adamw_step(std::vector<Tensor>{x}, state, 1e-3, TrainConfig{}), StateError);
}

TEST(AdamW, BaseParametersAreNeverTouched) {
  const auto config = ModelConfig::byte_level(32, 1, 4, 64, 4, 256);
  const auto params = ModelParams<float>::init(config, 5);
  const auto before = section_sha256(make_checkpoint(params).section(SectionTag::kBase));
  auto adapters = init_adapters<float>(config, AdapterConfig{}, 6);
  const auto loss = pretrain_loss(params, adapters, random_tokens(12, 1), 2, PrefixVariant::kKv);
  backward(loss);
  OptimizerState state;
  adamw_step(adapters, state, 1e-2, TrainConfig{});
  EXPECT_EQ(section_sha256(make_checkpoint(params).section(SectionTag::kBase)), before);
  for (const auto& nt : params.named_tensors()) EXPECT_FALSE(nt.tensor.has_grad()) << nt.name;
}

TEST(LearningRate, LinearWarmupThenConstant) {
  TrainConfig config;
  config.warmup_steps = 300;
  config.peak_lr = 1e-4;
  EXPECT_EQ(lr_at_step(0, config), 0.0);
  EXPECT_NEAR(lr_at_step(150, config), 5e-5, 1e-18);
  EXPECT_EQ(lr_at_step(300, config), 1e-4);
  EXPECT_EQ(lr_at_step(5000, config), 1e-4);
}

TEST(TrainConfig, DefaultsAndValidation) {
  const auto pre = TrainConfig::defaults_for(Phase::kPretrain, 16);
  EXPECT_EQ(pre.peak_lr, 1e-4);
  EXPECT_EQ(pre.warmup_steps, 300u);
  EXPECT_EQ(pre.batch_size, 4u);
  EXPECT_EQ(TrainConfig::defaults_for(Phase::kFinetune, 4).peak_lr, 5e-5);

  TrainConfig bad;
  bad.total_steps = 10;
  bad.warmup_steps = 20;
  EXPECT_THROW(bad.validate(), ConfigError);
  TrainConfig zero_batch;
  zero_batch.batch_size = 0;
  EXPECT_THROW(zero_batch.validate(), ConfigError);

  const auto round = TrainConfig::from_json(pre.to_json());
  EXPECT_EQ(round.to_json(), pre.to_json());
  EXPECT_THROW(TrainConfig::from_json("{\"batch_size\": \"four\"}"), ConfigError);
}

struct SmallRun {
  ModelConfig config = ModelConfig::byte_level(32, 1, 4, 64, 4, 256);
  ModelParams<float> params = ModelParams<float>::init(config, 9);
  AdapterParams<float> adapters = init_adapters<float>(config, AdapterConfig{}, 10);
  std::vector<TrainingExample> train;
  TrainConfig tc;

  SmallRun() {
    for (std::uint64_t i = 0; i < 6; ++i) train.push_back({random_tokens(24, i), {}, {}});
    tc.total_steps = 12;
    tc.warmup_steps = 3;
    tc.batch_size = 2;
    tc.peak_lr = 1e-2;
    tc.k = 2;
    tc.eval_every = 4;
  }
};

std::string adapter_digest(const ModelParams<float>& base, const AdapterParams<float>& adapters) {
  return section_sha256(make_checkpoint(base, &adapters).section(SectionTag::kAdapters));
}

TEST(RunTraining, ZeroStepsLeavesAdaptersUnchanged) {
  SmallRun run;
  run.tc.total_steps = 0;
  run.tc.warmup_steps = 0;
  const auto before = adapter_digest(run.params, run.adapters);
  const auto result = run_training(run.params, run.adapters, run.train, {}, run.tc);
  EXPECT_TRUE(result.trace.empty());
  EXPECT_EQ(adapter_digest(run.params, result.adapters), before);
}

TEST(RunTraining, DeterministicAndFrozen) {
  SmallRun run;
  const auto base_before = section_sha256(make_checkpoint(run.params).section(SectionTag::kBase));
  const auto adapters_before = adapter_digest(run.params, run.adapters);
  const std::vector<TrainingExample> dev(run.train.begin(), run.train.begin() + 2);
  const auto a = run_training(run.params, run.adapters, run.train, dev, run.tc);
  const auto b = run_training(run.params, run.adapters, run.train, dev, run.tc);
  EXPECT_EQ(adapter_digest(run.params, a.adapters), adapter_digest(run.params, b.adapters));
  EXPECT_NE(adapter_digest(run.params, a.adapters), adapters_before);
  EXPECT_EQ(adapter_digest(run.params, run.adapters), adapters_before);
  EXPECT_EQ(section_sha256(make_checkpoint(run.params).section(SectionTag::kBase)), base_before);

  std::size_t train_points = 0, dev_points = 0;
  for (const auto& p : a.trace) (p.split == "train" ? train_points : dev_points)++;
  EXPECT_EQ(train_points, 12u);
  EXPECT_EQ(dev_points, 3u);
  EXPECT_EQ(a.optimizer.step, 12u);

  std::ostringstream csv;
  write_loss_csv(a.trace, csv);
  EXPECT_EQ(csv.str().rfind("step,split,loss\n1,train,", 0), 0u);
}

TEST(RunTraining, NonFiniteLossAbortsWithStep) {
  SmallRun run;
  run.params.lm_head.mutable_data()[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    run_training(run.params, run.adapters, run.train, {}, run.tc);
    FAIL() << "expected a numeric failure";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos) << e.what();
  }
}

TEST(RunTraining, ReducesLossOnRepeatedText) {
  SmallRun run;
  run.train.resize(1);
  run.tc.batch_size = 1;
  run.tc.total_steps = 60;
  run.tc.warmup_steps = 5;
  const auto result = run_training(run.params, run.adapters, run.train, {}, run.tc);
  EXPECT_LT(result.trace.back().loss, result.trace.front().loss);
}

TEST(BatchLoss, EqualsMeanOfExampleLosses) {
  SmallRun run;
  double total = 0.0;
  for (const auto& ex : run.train) total += example_loss(run.params, run.adapters, ex, run.tc).item();
  EXPECT_NEAR(batch_loss(run.params, run.adapters, run.train, run.tc), total / double(run.train.size()), 1e-6);
  const std::span<const TrainingExample> all(run.train);
  const double half_a = batch_loss(run.params, run.adapters, all.first(3), run.tc);
  const double half_b = batch_loss(run.params, run.adapters, all.subspan(3), run.tc);
  EXPECT_NEAR(batch_loss(run.params, run.adapters, all, run.tc), (half_a + half_b) / 2.0, 1e-6);
}

TEST(LmExamples, TextAndInstructLayouts) {
  const auto config = ModelConfig::byte_level(32, 1, 4, 64, 4, 256);
  const auto ex = lm_example_from_text(config, tokenize("hi"));
  EXPECT_EQ(ex.tokens, (std::vector<TokenId>{config.bos_id, 'h', 'i', config.eos_id}));
  EXPECT_EQ(ex.first_target, 1u);
  const auto qa = lm_example_from_qa(config, "ctx", "q?", "ans", true);
  EXPECT_EQ(qa.tokens.back(), config.eos_id);
  EXPECT_EQ(detokenize(std::span<const TokenId>(qa.tokens).subspan(qa.first_target, 3)), "ans");
}

TEST(LmExamples, RepeatLayout) {
  const auto config = ModelConfig::byte_level(32, 1, 4, 64, 4, 256);
  const auto ex = lm_example_repeat(config, tokenize("ab"));
  EXPECT_EQ(ex.tokens, (std::vector<TokenId>{'a', 'b', config.bos_id, 'a', 'b', config.eos_id}));
  EXPECT_EQ(ex.first_target, 1u);
  EXPECT_THROW(lm_example_repeat(config, std::vector<TokenId>{}), DataError);
}

TEST(LmExamples, BaseMixCounts) {
  const auto config = ModelConfig::byte_level(32, 1, 4, 64, 4, 1024);
  const std::size_t buckets[] = {96};
  const auto corpus = build_synthetic_corpus(20, buckets, 3);
  const auto qa = build_synthetic_qa(corpus, 5, 3);
  std::size_t texts = 0;
  for (const auto& r : corpus) texts += r.split == Split::kTrain;
  std::size_t questions = 0;
  for (const auto& q : qa) {
    for (const auto& r : corpus) questions += r.id == q.context_id && r.split == Split::kTrain;
  }
  EXPECT_EQ(base_lm_examples(config, corpus, qa, Split::kTrain).size(), 2 * texts + 2 * questions);
  BaseLmMix plain;
  plain.instruct_qa = plain.zero_shot_qa = plain.repeats = false;
  EXPECT_EQ(base_lm_examples(config, corpus, qa, Split::kTrain, plain).size(), texts);
  BaseLmMix zero_shot = plain;
  zero_shot.zero_shot_qa = true;
  const auto with_qa = base_lm_examples(config, corpus, qa, Split::kTrain, zero_shot);
  ASSERT_EQ(with_qa.size(), texts + questions);
  // Zero-shot examples start like the full-context reference prompt.
  EXPECT_EQ(with_qa.back().tokens.front(), config.bos_id);
}

TEST(BaseTraining, UpdatesBaseAndRestoresFreeze) {
  const auto config = ModelConfig::byte_level(32, 1, 4, 64, 4, 256);
  auto params = ModelParams<float>::init(config, 2);
  const auto before = section_sha256(make_checkpoint(params).section(SectionTag::kBase));
  std::vector<LmExample> train;
  for (std::uint64_t i = 0; i < 4; ++i) train.push_back(lm_example_from_text(config, random_tokens(20, i)));
  TrainConfig tc;
  tc.total_steps = 5;
  tc.warmup_steps = 1;
  tc.batch_size = 2;
  tc.peak_lr = 1e-3;
  const auto trace = train_base_model(params, train, {}, tc);
  EXPECT_EQ(trace.size(), 5u);
  EXPECT_NE(section_sha256(make_checkpoint(params).section(SectionTag::kBase)), before);
  for (const auto& nt : params.named_tensors()) EXPECT_FALSE(nt.tensor.requires_grad()) << nt.name;
}

}  // namespace
}  // namespace kvc
