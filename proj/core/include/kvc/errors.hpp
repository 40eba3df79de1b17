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

#include <stdexcept>
#include <string>

namespace kvc {

// Base of every error raised by the library. Subclasses map onto the
// CLI exit codes (see tools/main.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
  using Error::Error;
};
class IndexError : public Error {
  using Error::Error;
};
class RangeError : public Error {
  using Error::Error;
};
class StateError : public Error {
  using Error::Error;
};
class ConfigError : public Error {
  using Error::Error;
};
class CapacityError : public Error {
  using Error::Error;
};
class ContractError : public Error {
  using Error::Error;
};
class DataError : public Error {
  using Error::Error;
};
class NumericError : public Error {
  using Error::Error;
};
class FormatError : public Error {
  using Error::Error;
};
class MissingArtifactError : public Error {
  using Error::Error;
};

}  // namespace kvc
