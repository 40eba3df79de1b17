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

#include "kvc/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <regex>
#include <set>
#include <unordered_map>

#include "kvc/errors.hpp"
#include "kvc/tokenizer.hpp"

namespace kvc {

namespace {

// Placeholders: {E} subject identifier, {F} second identifier, {N} number,
// {W} lowercase word, {C} code such as "QX-481".
struct QuestionTemplate {
  const char* question;
  const char* answer;
};

struct FactTemplate {
  const char* sentence;
  std::vector<QuestionTemplate> questions;
};

const std::vector<FactTemplate>& fact_templates() {
  static const std::vector<FactTemplate> templates = {
      {"{E} is a {W}.", {{"What kind of object is {E}?", "{W}"}}},
      {"{E} was first recorded in {N}.",
       {{"When was {E} first recorded?", "{N}"}, {"What was first recorded in {N}?", "{E}"}}},
      {"The mass of {E} is {N} tons.",
       {{"What is the mass of {E}?", "{N} tons"}, {"What has a mass of {N} tons?", "{E}"}}},
      {"The color of {E} is {W}.", {{"What is the color of {E}?", "{W}"}}},
      {"{E} lies near {F}.", {{"What does {E} lie near?", "{F}"}, {"What lies near {F}?", "{E}"}}},
      {"{E} has {N} towers.", {{"How many towers does {E} have?", "{N}"}, {"What has {N} towers?", "{E}"}}},
      {"{E} was built by {F}.", {{"Who built {E}?", "{F}"}, {"What did {F} build?", "{E}"}}},
      {"{E} is {N} km from {F}.", {{"How far is {E} from {F}?", "{N} km"}, {"What is {N} km from {F}?", "{E}"}}},
      {"The code of {E} is {C}.", {{"What is the code of {E}?", "{C}"}, {"What has the code {C}?", "{E}"}}},
      {"The temperature of {E} is {N} degrees.",
       {{"What is the temperature of {E}?", "{N} degrees"}, {"What has a temperature of {N} degrees?", "{E}"}}},
  };
  return templates;
}

constexpr std::array<const char*, 12> kKinds = {"comet",  "moon",    "reactor", "glacier", "library", "vessel",
                                                "garden", "canal", "beacon",  "quarry",  "bunker", "tower"};
constexpr std::array<const char*, 10> kColors = {"amber", "blue",  "crimson", "green", "grey",
                                                 "ivory", "olive", "silver",  "teal",  "violet"};

// Kind-specific placeholder regex fragments.
std::string placeholder_pattern(char kind) {
  switch (kind) {
    case 'E':
    case 'F':
      return "([A-Z][a-z]+)";
    case 'N':
      return "([0-9]+)";
    case 'W':
      return "([a-z]+)";
    case 'C':
      return "([A-Z]{2}-[0-9]{3})";
    default:
      throw ContractError(std::string("unknown placeholder {") + kind + "}");
  }
}

struct CompiledTemplate {
  std::regex pattern;
  std::vector<char> slots;  // placeholder kind per capture group
  const FactTemplate* source;
};

const std::vector<CompiledTemplate>& compiled_templates() {
  static const std::vector<CompiledTemplate> compiled = [] {
    std::vector<CompiledTemplate> out;
    for (const auto& t : fact_templates()) {
      std::string re = "^";
      std::vector<char> slots;
      for (const char* p = t.sentence; *p; ++p) {
        if (*p == '{') {
          slots.push_back(p[1]);
          re += placeholder_pattern(p[1]);
          p += 2;
        } else if (std::string_view(".^$|()[]*+?\\{}").find(*p) != std::string_view::npos) {
          re += '\\';
          re += *p;
        } else {
          re += *p;
        }
      }
      re += "$";
      out.push_back({std::regex(re), std::move(slots), &t});
    }
    return out;
  }();
  return compiled;
}

std::string fill(std::string_view pattern, const std::map<char, std::string>& values) {
  std::string out;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] == '{' && i + 2 < pattern.size() && pattern[i + 2] == '}') {
      out += values.at(pattern[i + 1]);
      i += 2;
    } else {
      out += pattern[i];
    }
  }
  return out;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find(". ", start);
    if (end == std::string_view::npos) {
      out.emplace_back(text.substr(start));
      break;
    }
    out.emplace_back(text.substr(start, end + 1 - start));
    start = end + 2;
  }
  return out;
}

struct Candidate {
  std::string question;
  std::string answer;
};

// Parses each sentence back into a fact and expands its question templates.
// Reverse questions whose key value appears more than once are skipped.
std::vector<Candidate> candidate_questions(std::string_view text) {
  std::vector<Candidate> out;
  std::set<std::string> seen;
  for (const auto& sentence : split_sentences(text)) {
    for (const auto& ct : compiled_templates()) {
      std::smatch m;
      if (!std::regex_match(sentence, m, ct.pattern)) continue;
      std::map<char, std::string> values;
      for (std::size_t g = 0; g < ct.slots.size(); ++g) values[ct.slots[g]] = m[g + 1].str();
      for (const auto& qt : ct.source->questions) {
        Candidate c{fill(qt.question, values), fill(qt.answer, values)};
        if (c.question.find(c.answer) != std::string::npos) continue;
        // Ambiguity guard: the question's own fill values must occur once.
        bool unique = true;
        for (const auto& [kind, value] : values) {
          if (std::string_view(qt.question).find(std::string("{") + kind + "}") == std::string_view::npos) continue;
          std::size_t count = 0;
          for (std::size_t pos = text.find(value); pos != std::string_view::npos; pos = text.find(value, pos + 1)) {
            ++count;
          }
          if (kind != 'E' && count != 1) unique = false;
        }
        if (!unique || !seen.insert(c.question).second) continue;
        out.push_back(std::move(c));
      }
      break;
    }
  }
  return out;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

// Bijective scramble of a 24-bit integer.
std::uint32_t mix24(std::uint32_t x) {
  constexpr std::uint32_t kMask = (1u << 24) - 1;
  x &= kMask;
  x = (x * 0x2545F5u) & kMask;
  x ^= x >> 11;
  x = (x * 0x1B8735u) & kMask;
  x ^= x >> 13;
  return x;
}

// 24 bits -> four consonant-vowel syllables, so distinct inputs give
// distinct names.
std::string identifier(std::uint32_t name_space, std::uint32_t record, std::uint32_t slot) {
  static constexpr char kConsonants[] = "bdfgklmnprstvzhj";
  static constexpr char kVowels[] = "aeio";
  if (record >= (1u << 14)) throw CapacityError("identifier space allows at most 16384 records per split");
  if (slot >= (1u << 6)) throw CapacityError("identifier space exhausted within one record");
  const std::uint32_t code = mix24(((name_space & 0xFu) << 20) | (record << 6) | slot);
  std::string name;
  for (int i = 3; i >= 0; --i) {
    const std::uint32_t syllable = (code >> (6 * i)) & 0x3Fu;
    name += kConsonants[syllable >> 2];
    name += kVowels[syllable & 3u];
  }
  name[0] = static_cast<char>(name[0] - 'a' + 'A');
  return name;
}

constexpr std::size_t kLengthSlack = 20;

struct RecordGenerator {
  std::mt19937_64 rng;
  std::uint32_t name_space;
  std::uint32_t record;
  std::uint32_t next_slot = 0;
  std::set<std::string> used_values;

  std::string new_name() { return identifier(name_space, record, next_slot++); }

  std::size_t uniform(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  }

  std::string unique_value(const std::function<std::string()>& draw) {
    for (;;) {
      auto v = draw();
      if (used_values.insert(v).second) return v;
    }
  }

  std::string number_for(std::size_t template_index) {
    switch (template_index) {
      case 1:
        return unique_value([&] { return std::to_string(uniform(1000, 2023)); });
      case 5:
        return unique_value([&] { return std::to_string(uniform(2, 99)); });
      case 9:
        return unique_value([&] { return std::to_string(uniform(1, 999)); });
      default:
        return unique_value([&] { return std::to_string(uniform(10, 9999)); });
    }
  }

  std::string code() {
    return unique_value([&] {
      std::string c;
      c += static_cast<char>('A' + uniform(0, 25));
      c += static_cast<char>('A' + uniform(0, 25));
      c += '-';
      c += std::to_string(uniform(100, 999));
      return c;
    });
  }

  std::string sentence(std::size_t template_index, const std::string& subject) {
    const auto& t = fact_templates()[template_index];
    std::map<char, std::string> values{{'E', subject}};
    const std::string_view s = t.sentence;
    if (s.find("{F}") != std::string_view::npos) values['F'] = new_name();
    if (s.find("{N}") != std::string_view::npos) values['N'] = number_for(template_index);
    if (s.find("{C}") != std::string_view::npos) values['C'] = code();
    if (s.find("{W}") != std::string_view::npos) {
      values['W'] = template_index == 0 ? kKinds[uniform(0, kKinds.size() - 1)] : kColors[uniform(0, kColors.size() - 1)];
    }
    return fill(t.sentence, values);
  }

  // One attempt: facts about a first entity, then about entities it
  // mentions, until the text reaches `bucket` bytes and supports enough
  // questions.
  std::string attempt(std::size_t bucket, std::size_t needed) {
    next_slot = 0;
    used_values.clear();
    struct Entity {
      std::string name;
      std::vector<std::size_t> remaining;
    };
    std::vector<Entity> entities;
    auto add_entity = [&](std::string name) {
      Entity e{std::move(name), {}};
      e.remaining.resize(fact_templates().size());
      std::iota(e.remaining.begin(), e.remaining.end(), 0);
      std::shuffle(e.remaining.begin(), e.remaining.end(), rng);
      entities.push_back(std::move(e));
    };
    add_entity(new_name());
    std::string text;
    std::size_t current = 0;
    while (text.size() < bucket || candidate_questions(text).size() < needed) {
      while (current < entities.size() && entities[current].remaining.empty()) ++current;
      if (current == entities.size()) add_entity(new_name());
      const std::size_t template_index = entities[current].remaining.back();
      entities[current].remaining.pop_back();
      const std::string subject = entities[current].name;
      const std::string s = sentence(template_index, subject);
      // Names introduced by the sentence get their own facts later on.
      for (std::uint32_t slot = static_cast<std::uint32_t>(entities.size()); slot < next_slot; ++slot) {
        add_entity(identifier(name_space, record, slot));
      }
      if (!text.empty()) text += ' ';
      text += s;
    }
    return text;
  }

  // Texts stay within kLengthSlack bytes of their bucket so that a text and
  // its regeneration fit the position budget together.
  std::string paragraph(std::size_t bucket) {
    const std::size_t needed = qa_pairs_for_bucket(bucket);
    std::string best;
    for (int i = 0; i < 256; ++i) {
      std::string text = attempt(bucket, needed);
      if (text.size() <= bucket + kLengthSlack) return text;
      if (best.empty() || text.size() < best.size()) best = std::move(text);
    }
    return best;
  }
};

const char* epoch_tag_for(Split split) {
  switch (split) {
    case Split::kTrain:
      return "2023-06";
    case Split::kDev:
      return "2024-01";
    default:
      return "2024-02";
  }
}

}  // namespace

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kDev:
      return "dev";
    default:
      return "test";
  }
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "dev") return Split::kDev;
  if (name == "test") return Split::kTest;
  throw DataError("unknown split '" + std::string(name) + "'");
}

std::size_t qa_pairs_for_bucket(std::size_t bucket, std::size_t pairs_per_96_tokens) {
  return (pairs_per_96_tokens * bucket + 95) / 96;
}

std::vector<CorpusRecord> build_synthetic_corpus(std::size_t n, std::span<const std::size_t> buckets,
                                                 std::uint64_t seed, const CorpusOptions& options) {
  if (n < 1) throw ContractError("build_synthetic_corpus: n must be at least 1");
  if (buckets.empty()) throw ContractError("build_synthetic_corpus: no buckets given");
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * options.test_fraction));
  const auto n_dev = static_cast<std::size_t>(std::llround(static_cast<double>(n) * options.dev_fraction));
  if (n_test + n_dev > n) throw ContractError("build_synthetic_corpus: split fractions exceed 1");
  const std::size_t n_train = n - n_test - n_dev;

  std::vector<CorpusRecord> records;
  records.reserve(n);
  std::size_t global = 0;
  for (const auto& [split, count] : {std::pair{Split::kTrain, n_train}, {Split::kDev, n_dev}, {Split::kTest, n_test}}) {
    const auto split_index = static_cast<std::uint64_t>(split);
    for (std::size_t i = 0; i < count; ++i, ++global) {
      RecordGenerator gen{std::mt19937_64(splitmix(seed * 3 + split_index) ^ splitmix(i + 1)),
                          static_cast<std::uint32_t>((seed * 3 + split_index) & 0x3FFu), static_cast<std::uint32_t>(i),
                          0, {}};
      CorpusRecord r;
      char id[32];
      std::snprintf(id, sizeof id, "%s-%05zu", std::string(split_name(split)).c_str(), i);
      r.id = id;
      r.bucket = buckets[global % buckets.size()];
      r.text = gen.paragraph(r.bucket);
      r.token_length = tokenize(r.text).size();
      r.split = split;
      r.epoch_tag = epoch_tag_for(split);
      records.push_back(std::move(r));
    }
  }
  return records;
}

std::vector<QARecord> build_synthetic_qa(std::span<const CorpusRecord> corpus, std::size_t pairs_per_96_tokens,
                                         std::uint64_t seed) {
  if (corpus.empty()) throw ContractError("build_synthetic_qa: corpus is empty");
  std::vector<QARecord> out;
  std::int64_t next_id = 1;
  for (const auto& record : corpus) {
    auto candidates = candidate_questions(record.text);
    const std::size_t needed = qa_pairs_for_bucket(record.bucket, pairs_per_96_tokens);
    if (candidates.size() < needed) {
      throw DataError("record " + record.id + " yields " + std::to_string(candidates.size()) +
                      " questions, needs " + std::to_string(needed));
    }
    std::mt19937_64 rng(splitmix(seed) ^ fnv1a(record.id));
    std::shuffle(candidates.begin(), candidates.end(), rng);
    for (std::size_t i = 0; i < needed; ++i) {
      out.push_back({next_id++, record.id, candidates[i].question, candidates[i].answer});
    }
  }
  return out;
}

std::map<std::size_t, std::vector<CorpusRecord>> bucket_by_length(std::span<const CorpusRecord> records,
                                                                  std::span<const std::size_t> buckets) {
  std::vector<std::size_t> sorted(buckets.begin(), buckets.end());
  std::sort(sorted.begin(), sorted.end());
  std::map<std::size_t, std::vector<CorpusRecord>> groups;
  for (const auto& r : records) {
    auto it = std::upper_bound(sorted.begin(), sorted.end(), r.token_length);
    if (it == sorted.begin()) continue;
    groups[*std::prev(it)].push_back(r);
  }
  return groups;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size, std::uint64_t seed) {
  if (batch_size < 1) throw ContractError("batch_size must be at least 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start + batch_size <= n; start += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(start + batch_size));
  }
  return batches;
}

bool is_contiguous_span(std::span<const TokenId> needle, std::span<const TokenId> haystack) {
  if (needle.empty()) return true;
  return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) != haystack.end();
}

void write_corpus_jsonl(std::span<const CorpusRecord> records, std::ostream& out) {
  for (const auto& r : records) {
    nlohmann::json j{{"id", r.id}, {"text", r.text}, {"bucket", r.bucket}, {"split", split_name(r.split)}};
    out << j.dump() << '\n';
  }
}

std::vector<CorpusRecord> read_corpus_jsonl(std::istream& in) {
  std::vector<CorpusRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      CorpusRecord r;
      r.id = j.at("id").get<std::string>();
      r.text = j.at("text").get<std::string>();
      r.bucket = j.at("bucket").get<std::size_t>();
      r.split = parse_split(j.at("split").get<std::string>());
      r.token_length = tokenize(r.text).size();
      r.epoch_tag = epoch_tag_for(r.split);
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_qa_json(std::span<const QARecord> records, std::ostream& out) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records) {
    arr.push_back({{"id", r.id}, {"question", r.question}, {"answer", r.answer}, {"context_id", r.context_id}});
  }
  out << arr.dump(1) << '\n';
}

std::vector<QARecord> read_qa_json(std::istream& in) {
  std::vector<QARecord> out;
  try {
    const auto arr = nlohmann::json::parse(in);
    if (!arr.is_array()) throw DataError("QA file must hold a JSON array");
    for (const auto& j : arr) {
      out.push_back({j.at("id").get<std::int64_t>(), j.at("context_id").get<std::string>(),
                     j.at("question").get<std::string>(), j.at("answer").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("QA file: ") + e.what());
  }
  return out;
}

std::vector<std::string> audit_qa(std::span<const CorpusRecord> corpus, std::span<const QARecord> qa,
                                  std::size_t pairs_per_96_tokens) {
  std::vector<std::string> problems;
  std::unordered_map<std::string, const CorpusRecord*> by_id;
  for (const auto& r : corpus) by_id[r.id] = &r;
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& q : qa) {
    auto it = by_id.find(q.context_id);
    if (it == by_id.end()) {
      problems.push_back("qa " + std::to_string(q.id) + ": unknown context " + q.context_id);
      continue;
    }
    ++counts[q.context_id];
    if (q.answer.empty() || !is_contiguous_span(tokenize(q.answer), tokenize(it->second->text))) {
      problems.push_back("qa " + std::to_string(q.id) + ": answer is not a span of its context");
    }
    if (q.question.find(q.answer) != std::string::npos) {
      problems.push_back("qa " + std::to_string(q.id) + ": answer appears in the question");
    }
  }
  for (const auto& r : corpus) {
    const auto expected = qa_pairs_for_bucket(r.bucket, pairs_per_96_tokens);
    if (counts[r.id] != expected) {
      problems.push_back("context " + r.id + ": " + std::to_string(counts[r.id]) + " pairs, expected " +
                         std::to_string(expected));
    }
  }
  return problems;
}

}  // namespace kvc
