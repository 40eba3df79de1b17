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

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kvc/metrics.hpp"
#include "kvc/tokenizer.hpp"

// Slow, obviously-correct scorers used to cross-check the library metrics.
namespace kvc::testing {

inline std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

inline std::size_t lcs_oracle(const std::vector<TokenId>& a, const std::vector<TokenId>& b) {
  std::vector<std::vector<std::size_t>> dp(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      dp[i][j] = a[i - 1] == b[j - 1] ? dp[i - 1][j - 1] + 1 : std::max(dp[i - 1][j], dp[i][j - 1]);
    }
  }
  return dp[a.size()][b.size()];
}

inline double rouge_oracle(const std::vector<TokenId>& cand, const std::vector<TokenId>& ref) {
  if (cand.empty()) return 0.0;
  const double l = double(lcs_oracle(cand, ref));
  if (l == 0.0) return 0.0;
  const double p = l / double(cand.size());
  const double r = l / double(ref.size());
  return 2 * p * r / (p + r);
}

// Normalization written the way the reference scorer phrases it: lowercase,
// delete punctuation, blank out articles, split on whitespace.
inline std::vector<std::string> normalize_oracle(const std::string& text) {
  std::string s;
  for (const char c : text) {
    if (!std::ispunct(static_cast<unsigned char>(c))) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  s = std::regex_replace(s, std::regex(R"(\b(a|an|the)\b)"), " ");
  return words(s);
}

inline QaScore qa_oracle(const std::string& pred, const std::string& gold) {
  const auto p = normalize_oracle(pred);
  const auto g = normalize_oracle(gold);
  QaScore s;
  s.em = p == g ? 1.0 : 0.0;
  if (p.empty() || g.empty()) {
    s.f1 = s.em;
    return s;
  }
  std::size_t common = 0;
  for (const auto& w : std::set<std::string>(p.begin(), p.end())) {
    common += std::min<std::size_t>(std::count(p.begin(), p.end(), w), std::count(g.begin(), g.end(), w));
  }
  if (common == 0) return s;
  const double prec = double(common) / double(p.size());
  const double rec = double(common) / double(g.size());
  s.f1 = 2 * prec * rec / (prec + rec);
  return s;
}

}  // namespace kvc::testing
