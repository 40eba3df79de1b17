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

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kvc/tensor.hpp"

namespace kvc {

// Byte-level tokenizer: token id == byte value, a bijection on byte strings.
std::vector<TokenId> tokenize(std::string_view text);

// Inverse of tokenize. Throws ContractError on any id outside [0, 255].
std::string detokenize(std::span<const TokenId> ids);

// Display helper: bytes as-is, special ids dropped.
std::string render_text(std::span<const TokenId> ids);

}  // namespace kvc
