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
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "kvc/adapters.hpp"
#include "kvc/compressor.hpp"
#include "kvc/data.hpp"
#include "kvc/metrics.hpp"
#include "kvc/params.hpp"

namespace kvc {

struct EvalSummary {
  MetricReport metrics;  // macro averages
  double attended_pairs = 0.0;  // mean per item, per head, summed over layers
};

// Compress each text, regenerate it and score on byte tokens.
EvalSummary evaluate_regeneration(const ModelParams<float>& params, const AdapterParams<float>& adapters,
                                  std::span<const CorpusRecord> records, std::size_t k, PrefixVariant variant);

// Compress each question's context and answer from the compressed prefix.
EvalSummary evaluate_qa(const ModelParams<float>& params, const AdapterParams<float>& adapters,
                        std::span<const CorpusRecord> records, std::span<const QARecord> qa, std::size_t k,
                        PrefixVariant variant, std::size_t max_answer_tokens);

// Full-context answering with the base model, zero-shot or with the instruction prompt.
EvalSummary evaluate_full_context_qa(const ModelParams<float>& params, std::span<const CorpusRecord> records,
                                     std::span<const QARecord> qa, bool instruct, std::size_t max_answer_tokens);

struct ExperimentGrid {
  std::vector<std::size_t> ks{1, 4, 16};
  std::vector<std::size_t> buckets{std::begin(kDefaultBuckets), std::end(kDefaultBuckets)};
  std::vector<PrefixVariant> variants{PrefixVariant::kKv, PrefixVariant::kEmbed};
  bool gold_standards = true;
  std::size_t max_texts_per_bucket = 0;  // 0 keeps every test text
  std::size_t max_answer_tokens = 48;
  std::size_t workers = 1;
};

struct GridRow {
  std::string task;  // regeneration | qa
  std::string system;  // kv | embed | zero-shot | instruct
  std::size_t k = 0;  // 0 on full-context rows
  std::size_t bucket = 0;
  double ratio = 1.0;
  std::size_t items = 0;
  EvalSummary summary;
};

struct GridResult {
  std::vector<GridRow> rows;
  std::vector<std::string> missing;  // checkpoint paths that were not found
};

std::string base_checkpoint_name();
std::string pretrain_checkpoint_name(PrefixVariant variant, std::size_t k);
std::string finetune_checkpoint_name(PrefixVariant variant, std::size_t k);

// Evaluates every cell on the test split. Cells whose checkpoint is
// missing are listed in `missing` and skipped.
GridResult run_grid(const ExperimentGrid& grid, std::span<const CorpusRecord> corpus, std::span<const QARecord> qa,
                    const std::string& checkpoint_dir);

void write_grid_csv(const GridResult& result, std::ostream& out);
std::vector<GridRow> read_grid_csv(std::istream& in);

// grid.csv plus one SVG per metric (compression ratio on the x axis).
void write_grid_report(const std::vector<GridRow>& rows, const std::string& out_dir);

}  // namespace kvc
