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

#include "kvc/tokenizer.hpp"

#include "kvc/errors.hpp"

namespace kvc {

std::vector<TokenId> tokenize(std::string_view text) {
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  for (const char c : text) ids.push_back(static_cast<TokenId>(static_cast<unsigned char>(c)));
  return ids;
}

std::string detokenize(std::span<const TokenId> ids) {
  std::string text;
  text.reserve(ids.size());
  for (const TokenId id : ids) {
    if (id < 0 || id > 255) throw ContractError("detokenize: id " + std::to_string(id) + " is not a byte token");
    text.push_back(static_cast<char>(static_cast<unsigned char>(id)));
  }
  return text;
}

std::string render_text(std::span<const TokenId> ids) {
  std::string text;
  for (const TokenId id : ids) {
    if (id >= 0 && id <= 255) text.push_back(static_cast<char>(static_cast<unsigned char>(id)));
  }
  return text;
}

}  // namespace kvc
