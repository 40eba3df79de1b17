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

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kvc/tensor.hpp"

namespace kvc {

// Token-level ROUGE-L F-measure. Empty candidate scores 0; an empty
// reference is a ContractError.
double rouge_l_f(std::span<const TokenId> candidate, std::span<const TokenId> reference);
double rouge_l_f(std::span<const std::string> candidate, std::span<const std::string> reference);

// Sentence BLEU with clipped n-gram precision and brevity penalty. Zero
// match counts are replaced by 1e-9. Orders above the candidate length are
// skipped, so bleu(x, x) == 1 for any non-empty x.
double bleu(std::span<const TokenId> candidate, std::span<const TokenId> reference, std::size_t max_n = 4);
double bleu(std::span<const std::string> candidate, std::span<const std::string> reference, std::size_t max_n = 4);

// Lowercase, drop punctuation and the articles a/an/the, split on whitespace.
std::vector<std::string> normalize_answer(std::string_view text);

struct QaScore {
  double f1 = 0.0;
  double em = 0.0;
};

QaScore qa_f1_em(std::string_view predicted, std::string_view gold);

struct MetricReport {
  double rouge_l_f = 0.0;
  double bleu = 0.0;
  double f1 = 0.0;
  double em = 0.0;
  std::size_t regeneration_items = 0;
  std::size_t qa_items = 0;

  void add_regeneration(double rouge, double bleu_score);
  void add_qa(const QaScore& score);
  // Converts accumulated sums to macro averages.
  MetricReport averaged() const;

 private:
  double rouge_sum_ = 0.0;
  double bleu_sum_ = 0.0;
  double f1_sum_ = 0.0;
  double em_sum_ = 0.0;
};

}  // namespace kvc
