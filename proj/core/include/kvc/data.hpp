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
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kvc/tensor.hpp"

namespace kvc {

enum class Split { kTrain, kDev, kTest };

std::string_view split_name(Split split);
Split parse_split(std::string_view name);

inline constexpr std::size_t kDefaultBuckets[] = {96, 192, 288, 384, 480};

struct CorpusRecord {
  std::string id;
  std::string text;
  std::size_t token_length = 0;
  std::size_t bucket = 96;
  Split split = Split::kTrain;
  std::string epoch_tag;  // stand-in for a publication date
};

// `answer` is always a contiguous substring of the referenced context.
struct QARecord {
  std::int64_t id = 0;
  std::string context_id;
  std::string question;
  std::string answer;
};

struct CorpusOptions {
  double dev_fraction = 0.05;
  double test_fraction = 0.10;
};

// Grammar-generated fact paragraphs. Record i targets bucket
// buckets[i % buckets.size()] and is at least that many tokens long. Every
// sentence names a generated identifier; identifiers are unique per
// (seed, split, record), so splits and distinct seeds (mod 341) never share
// identifiers or sentences.
std::vector<CorpusRecord> build_synthetic_corpus(std::size_t n, std::span<const std::size_t> buckets,
                                                 std::uint64_t seed, const CorpusOptions& options = {});

// Number of QA pairs for a record of the given bucket: ceil(5 * bucket / 96).
std::size_t qa_pairs_for_bucket(std::size_t bucket, std::size_t pairs_per_96_tokens = 5);

// Rule-based extractive QA: sentences are parsed back into facts and turned
// into templated questions whose answers are exact spans. Throws DataError
// when a record yields too few questions.
std::vector<QARecord> build_synthetic_qa(std::span<const CorpusRecord> corpus, std::size_t pairs_per_96_tokens,
                                         std::uint64_t seed);

// Groups by the largest bucket <= token_length (stable). Records shorter
// than the smallest bucket are dropped.
std::map<std::size_t, std::vector<CorpusRecord>> bucket_by_length(std::span<const CorpusRecord> records,
                                                                  std::span<const std::size_t> buckets);

// One epoch of a seeded permutation cut into full batches; the trailing
// partial batch is dropped.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size, std::uint64_t seed);

template <typename Record>
std::vector<std::vector<Record>> batch_iter(std::span<const Record> records, std::size_t batch_size,
                                            std::uint64_t seed) {
  std::vector<std::vector<Record>> batches;
  for (const auto& idx : batch_indices(records.size(), batch_size, seed)) {
    auto& batch = batches.emplace_back();
    for (const auto i : idx) batch.push_back(records[i]);
  }
  return batches;
}

// True when `needle` occurs as a contiguous run inside `haystack`.
bool is_contiguous_span(std::span<const TokenId> needle, std::span<const TokenId> haystack);

// JSON-lines corpus: {"id", "text", "bucket", "split"} per line.
void write_corpus_jsonl(std::span<const CorpusRecord> records, std::ostream& out);
std::vector<CorpusRecord> read_corpus_jsonl(std::istream& in);

// JSON array of {"id", "question", "answer", "context_id"}.
void write_qa_json(std::span<const QARecord> records, std::ostream& out);
std::vector<QARecord> read_qa_json(std::istream& in);

// Checks span integrity, answer-not-in-question and per-record counts;
// returns a list of human-readable violations (empty when clean).
std::vector<std::string> audit_qa(std::span<const CorpusRecord> corpus, std::span<const QARecord> qa,
                                  std::size_t pairs_per_96_tokens = 5);

}  // namespace kvc
