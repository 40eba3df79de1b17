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

#include "kvc/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "kvc/errors.hpp"

namespace kvc {

namespace {

template <typename Tok>
std::size_t lcs_length(std::span<const Tok> a, std::span<const Tok> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

template <typename Tok>
double rouge_impl(std::span<const Tok> candidate, std::span<const Tok> reference) {
  if (reference.empty()) throw ContractError("rouge_l_f: reference is empty");
  if (candidate.empty()) return 0.0;
  const double l = static_cast<double>(lcs_length(candidate, reference));
  if (l == 0.0) return 0.0;
  const double p = l / static_cast<double>(candidate.size());
  const double r = l / static_cast<double>(reference.size());
  return 2.0 * p * r / (p + r);
}

template <typename Tok>
std::map<std::vector<Tok>, std::size_t> ngram_counts(std::span<const Tok> seq, std::size_t n) {
  std::map<std::vector<Tok>, std::size_t> counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) ++counts[std::vector<Tok>(seq.begin() + i, seq.begin() + i + n)];
  return counts;
}

template <typename Tok>
double bleu_impl(std::span<const Tok> candidate, std::span<const Tok> reference, std::size_t max_n) {
  constexpr double kFloor = 1e-9;
  if (reference.empty()) throw ContractError("bleu: reference is empty");
  if (max_n < 1) throw ContractError("bleu: max_n must be at least 1");
  if (candidate.empty()) return 0.0;
  const std::size_t orders = std::min(max_n, candidate.size());
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= orders; ++n) {
    const auto cand = ngram_counts(candidate, n);
    const auto ref = ngram_counts(reference, n);
    std::size_t matched = 0;
    for (const auto& [gram, count] : cand) {
      auto it = ref.find(gram);
      if (it != ref.end()) matched += std::min(count, it->second);
    }
    const double total = static_cast<double>(candidate.size() - n + 1);
    const double precision = matched == 0 ? kFloor / total : static_cast<double>(matched) / total;
    log_sum += std::log(precision);
  }
  const double brevity =
      std::exp(std::min(0.0, 1.0 - static_cast<double>(reference.size()) / static_cast<double>(candidate.size())));
  return std::clamp(brevity * std::exp(log_sum / static_cast<double>(orders)), 0.0, 1.0);
}

}  // namespace

double rouge_l_f(std::span<const TokenId> candidate, std::span<const TokenId> reference) {
  return rouge_impl(candidate, reference);
}

double rouge_l_f(std::span<const std::string> candidate, std::span<const std::string> reference) {
  return rouge_impl(candidate, reference);
}

double bleu(std::span<const TokenId> candidate, std::span<const TokenId> reference, std::size_t max_n) {
  return bleu_impl(candidate, reference, max_n);
}

double bleu(std::span<const std::string> candidate, std::span<const std::string> reference, std::size_t max_n) {
  return bleu_impl(candidate, reference, max_n);
}

std::vector<std::string> normalize_answer(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty() && word != "a" && word != "an" && word != "the") out.push_back(word);
    word.clear();
  };
  for (const char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      flush();
    } else if (!std::ispunct(c)) {
      word.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

QaScore qa_f1_em(std::string_view predicted, std::string_view gold) {
  if (gold.empty()) throw ContractError("qa_f1_em: gold answer is empty");
  const auto pred = normalize_answer(predicted);
  const auto ref = normalize_answer(gold);
  QaScore score;
  score.em = pred == ref ? 1.0 : 0.0;
  if (pred.empty() || ref.empty()) {
    score.f1 = score.em;
    return score;
  }
  std::map<std::string, std::size_t> ref_counts;
  for (const auto& w : ref) ++ref_counts[w];
  std::size_t overlap = 0;
  for (const auto& w : pred) {
    auto it = ref_counts.find(w);
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return score;
  const double p = static_cast<double>(overlap) / static_cast<double>(pred.size());
  const double r = static_cast<double>(overlap) / static_cast<double>(ref.size());
  score.f1 = 2.0 * p * r / (p + r);
  return score;
}

void MetricReport::add_regeneration(double rouge, double bleu_score) {
  rouge_sum_ += rouge;
  bleu_sum_ += bleu_score;
  ++regeneration_items;
}

void MetricReport::add_qa(const QaScore& score) {
  f1_sum_ += score.f1;
  em_sum_ += score.em;
  ++qa_items;
}

MetricReport MetricReport::averaged() const {
  MetricReport out = *this;
  if (regeneration_items > 0) {
    out.rouge_l_f = rouge_sum_ / static_cast<double>(regeneration_items);
    out.bleu = bleu_sum_ / static_cast<double>(regeneration_items);
  }
  if (qa_items > 0) {
    out.f1 = f1_sum_ / static_cast<double>(qa_items);
    out.em = em_sum_ / static_cast<double>(qa_items);
  }
  return out;
}

}  // namespace kvc
